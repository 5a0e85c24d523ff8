"""Training loop tying thresholds, pseudo-labels, and the contrastive term
together.

Each iteration processes one labeled batch (B) and one unlabeled batch
(mu*B), both as weak/strong view pairs:

1. supervised cross entropy on weak labeled views
2. per-class thresholds from the count window and the current global
   threshold; accept/reject every unlabeled sample on its weak view
3. accepted samples: hard pseudo-labels trained against the strong views
4. rejected samples: contrastive pull toward a same-batch prototype
   (anchors that find no positives are skipped, and counted)
5. count confident predictions into the window, then move the global
   threshold toward the batch mean confidence
6. one momentum-SGD step on the summed gradients, then the parameter
   shadow update

Pseudo-labels and all selections are treated as constants by the backward
pass; gradients flow through the strong-view logits (classification terms)
and the weak-view embeddings (contrastive term) only.  Given a frozen set
of decisions and a frozen contrastive plan, ``assemble_terms`` is a smooth
function of the parameters - which is what the derivative checks exercise.

Accounting invariant, checked every iteration and again by the metrics
validator: accepted + anchors + anchors_skipped == mu*B.

The run modes ablate the two mechanisms: "fixed" pins one global cutoff
and disables the contrastive term, "satpl" enables only the adaptive
thresholds, "uscl" only the contrastive term, "full" both.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import contrastive as contrast
from .augment import image_policies, vector_policies
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, config_to_dict, save_config
from .core import BatchConfig, ConfigError, NumericalError, assert_finite
from .data import (
    BatchStream,
    LabeledBatch,
    SslDataset,
    UnlabeledBatch,
    batches_per_pass,
    load_image_dataset,
    make_blobs,
    make_two_moons,
    split_ssl,
)
from .metrics import MetricsWriter, write_confusion, write_summary
from .network import Architecture, EmaShadow, Network, SgdMomentum, add_grads
from .thresholds import PseudoLabels, ThresholdState, decide_pseudo_labels


def contrastive_weight(t: int, initial: float, timescale: float) -> float:
    """Exponential ramp-down: initial at t=0, initial/e at t=timescale."""
    if t < 0:
        raise ValueError(f"iteration must be >= 0, got {t}")
    if timescale <= 0.0:
        raise ConfigError(f"timescale must be > 0, got {timescale}")
    if initial == 0.0:
        return 0.0
    return initial * math.exp(-t / timescale)


def total_loss(sup: float, unsup: float, contrast_term: float, w_unsup: float, w_contrast: float) -> float:
    return sup + w_unsup * unsup + w_contrast * contrast_term


def learning_rate(base: float, t: int, total: int, cosine: bool) -> float:
    """Optional cosine decay over the full schedule (7/16 of a period)."""
    if not cosine:
        return base
    return base * math.cos(7.0 * math.pi * t / (16.0 * total))


def pseudo_label_diagnostics(decisions: PseudoLabels, hidden_labels: np.ndarray) -> dict:
    """Quantity/quality bookkeeping against the hidden true classes.

    quality compares accepted pseudo-labels with hidden labels (distractor
    rows carry an out-of-range class, so they can never count as correct).
    With nothing accepted, quality is reported as 1.0 with the degenerate
    flag raised so downstream readers do not mistake it for a real 100%.
    """
    hidden = np.asarray(hidden_labels, dtype=np.int64)
    total = decisions.accepted.shape[0]
    if hidden.shape[0] != total:
        raise ValueError("hidden labels misaligned with decisions")
    accepted = decisions.num_accepted
    quantity = accepted / total
    if accepted == 0:
        quality, degenerate = 1.0, 1
    else:
        correct = int((decisions.labels[decisions.accepted] == hidden[decisions.accepted]).sum())
        quality, degenerate = correct / accepted, 0
    return {
        "quantity": quantity,
        "quality": quality,
        "quality_degenerate": degenerate,
        "mask_ratio": 1.0 - quantity,
    }


def evaluate(network: Network, x: np.ndarray, y: np.ndarray):
    """Top-1 accuracy and a true-by-predicted confusion matrix."""
    labels = np.asarray(y, dtype=np.int64)
    if labels.shape[0] == 0:
        raise ValueError("evaluation set is empty")
    probs = network.forward(x).probs
    _, preds = K.row_max_argmax(probs)
    num_classes = probs.shape[1]
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    accuracy = float((preds == labels).mean())
    return accuracy, confusion


# -- loss/gradient assembly ---------------------------------------------------


@dataclass
class TermValues:
    """Loss terms and counters for one iteration."""

    loss_sup: float
    loss_unsup: float
    loss_contrast: float
    lam_c: float

    def total(self, w_unsup: float) -> float:
        return total_loss(self.loss_sup, self.loss_unsup, self.loss_contrast, w_unsup, self.lam_c)


def assemble_terms(
    network: Network,
    labeled: LabeledBatch,
    unlabeled: UnlabeledBatch,
    decisions: PseudoLabels,
    plan: contrast.ContrastivePlan | None,
    w_unsup: float,
    lam_c: float,
    want_grads: bool = True,
):
    """Losses (and optionally parameter gradients) for frozen decisions and a
    frozen contrastive plan.

    Freezing makes this a smooth function of the parameters: re-running it
    after a parameter perturbation moves only the forward values, never the
    accept/reject pattern or the positive/negative selections, exactly
    matching what the backward pass assumes.
    """
    mu_b = unlabeled.weak.shape[0]
    lab_cache = network.forward(labeled.weak)
    loss_sup = float(K.nll_rows(lab_cache.probs, labeled.labels).mean())
    assert_finite(loss_sup, "supervised loss")

    strong_cache = network.forward(unlabeled.strong)
    accepted_rows = decisions.accepted
    loss_unsup = float(
        (K.nll_rows(strong_cache.probs, decisions.labels) * accepted_rows).sum() / mu_b
    )
    assert_finite(loss_unsup, "pseudo-label loss")

    weak_cache = None
    if plan is not None and plan.num_anchors > 0 and lam_c != 0.0:
        weak_cache = network.forward(unlabeled.weak)
        loss_contrast, d_weak_emb = contrast.loss_and_grad(plan, weak_cache.embedding)
        assert_finite(loss_contrast, "contrastive loss")
    elif plan is not None and plan.num_anchors > 0:
        loss_contrast = contrast.plan_loss(plan, network.forward(unlabeled.weak).embedding)
        d_weak_emb = None
    else:
        loss_contrast, d_weak_emb = 0.0, None

    values = TermValues(loss_sup=loss_sup, loss_unsup=loss_unsup,
                        loss_contrast=loss_contrast, lam_c=lam_c)
    if not want_grads:
        return values, None

    b = labeled.labels.shape[0]
    d_logits_lab = K.ce_softmax_grad(lab_cache.probs, labeled.labels, np.full(b, 1.0 / b))
    grads = network.backward(lab_cache, d_logits=d_logits_lab)
    assert_finite(np.concatenate([g.ravel() for g in grads]), "supervised gradients")

    if decisions.num_accepted > 0 and w_unsup != 0.0:
        row_weights = accepted_rows.astype(np.float64) * (w_unsup / mu_b)
        d_logits_strong = K.ce_softmax_grad(strong_cache.probs, decisions.labels, row_weights)
        unsup_grads = network.backward(strong_cache, d_logits=d_logits_strong)
        assert_finite(np.concatenate([g.ravel() for g in unsup_grads]), "pseudo-label gradients")
        add_grads(grads, unsup_grads)

    if weak_cache is not None and d_weak_emb is not None:
        contrast_grads = network.backward(weak_cache, d_embedding=lam_c * d_weak_emb)
        assert_finite(np.concatenate([g.ravel() for g in contrast_grads]), "contrastive gradients")
        add_grads(grads, contrast_grads)

    return values, grads


# -- run construction ---------------------------------------------------------


def build_dataset(cfg: TrainConfig):
    """Materialize (train_dataset, eval_x, eval_y) from the dataset block.

    Seeds derive from the run seed (children: generation, split, eval draw,
    weight init, training stream), so everything varies together across
    seeds yet reproduces exactly for a given config.
    """
    d = cfg.dataset
    children = np.random.SeedSequence(cfg.seed).spawn(5)
    gen_rng = np.random.default_rng(children[0])
    split_rng = np.random.default_rng(children[1])
    eval_rng = np.random.default_rng(children[2])
    if d.kind == "two_moons":
        full = make_two_moons(d.size, d.noise, gen_rng, d.distractor_fraction)
        eval_ds = make_two_moons(d.eval_size, d.noise, eval_rng)
    elif d.kind == "blobs":
        spread = d.spread if np.isscalar(d.spread) else list(d.spread)
        full = make_blobs(d.num_classes, d.size, spread, gen_rng, dim=d.dim,
                          distractor_fraction=d.distractor_fraction)
        eval_ds = make_blobs(d.num_classes, d.eval_size, spread, eval_rng, dim=d.dim)
    elif d.kind == "tiny_images":
        if d.path is None:
            raise ConfigError("dataset.path is required for tiny_images")
        full = load_image_dataset(d.path)
        if d.eval_path is not None:
            eval_ds = load_image_dataset(d.eval_path)
        else:
            # hold out the last eval_size rows of the file
            if full.labeled_x.shape[0] <= d.eval_size:
                raise ConfigError("image file too small for the requested eval holdout")
            cut = full.labeled_x.shape[0] - d.eval_size
            eval_ds = SslDataset(
                labeled_x=full.labeled_x[cut:], labeled_y=full.labeled_y[cut:],
                unlabeled_x=np.zeros((0, full.labeled_x.shape[1])),
                hidden_labels=np.zeros(0, dtype=np.int64),
                num_classes=full.num_classes, image_shape=full.image_shape,
            )
            full = SslDataset(
                labeled_x=full.labeled_x[:cut], labeled_y=full.labeled_y[:cut],
                unlabeled_x=full.unlabeled_x, hidden_labels=full.hidden_labels,
                num_classes=full.num_classes, image_shape=full.image_shape,
            )
    else:  # pragma: no cover - config validation rejects this earlier
        raise ConfigError(f"unknown dataset kind {d.kind!r}")
    train_ds = split_ssl(full, d.labels_per_class, split_rng)
    return train_ds, eval_ds.labeled_x, eval_ds.labeled_y


def build_policies(cfg: TrainConfig, dataset: SslDataset):
    a = cfg.augment
    if dataset.image_shape is not None:
        return image_policies(
            dataset.image_shape,
            flip_prob=a.image_flip,
            max_shift=a.image_shift,
            strong_noise=a.image_noise,
            erase_size=a.image_erase,
        )
    return vector_policies(a.weak_noise, a.strong_noise, a.strong_dropout)


@dataclass
class TrainResult:
    """In-memory view of a finished (or stopped) training session."""

    config: TrainConfig
    rows: list[dict]
    summary: dict
    final_accuracy: float
    confusion: np.ndarray
    network: Network
    shadow: EmaShadow
    optimizer: SgdMomentum
    thresholds: ThresholdState | None
    rng: np.random.Generator
    arch: Architecture
    iteration: int
    out_dir: str | None = None
    dataset: SslDataset | None = None
    eval_x: np.ndarray | None = None
    eval_y: np.ndarray | None = None


def train(
    cfg: TrainConfig,
    out_dir: str | None = None,
    resume_from: str | None = None,
    stop_after: int | None = None,
) -> TrainResult:
    """Run (or continue) a training session.

    out_dir, when given, receives config.json, metrics.csv, summary.json,
    confusion.csv, and checkpoint.npz.  resume_from restores a checkpoint
    saved with the same config; stop_after caps the iterations executed in
    this session (the config's total stays the schedule anchor, so the
    contrastive ramp is unaffected by where the run is split).
    """
    dataset, eval_x, eval_y = build_dataset(cfg)
    if dataset.unlabeled_x.shape[0] == 0:
        # Every sample got a label, so the unlabeled stream redraws labeled
        # inputs; the pseudo-label terms then add no information beyond the
        # supervised loss and the run degrades to supervised training.
        dataset = SslDataset(
            labeled_x=dataset.labeled_x,
            labeled_y=dataset.labeled_y,
            unlabeled_x=dataset.labeled_x.copy(),
            hidden_labels=dataset.labeled_y.copy(),
            num_classes=dataset.num_classes,
            image_shape=dataset.image_shape,
        )
    weak_policy, strong_policy = build_policies(cfg, dataset)
    num_classes = dataset.num_classes
    arch = Architecture(
        input_dim=dataset.input_dim,
        hidden=cfg.model.hidden,
        embed_dim=cfg.model.embed_dim,
        num_classes=num_classes,
        activation=cfg.model.activation,
        leaky_slope=cfg.model.leaky_slope,
    )
    batch_cfg = BatchConfig(
        labeled=cfg.batch.labeled,
        mu=cfg.batch.mu,
        num_classes=num_classes,
        embed_dim=cfg.model.embed_dim,
    )

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if config_to_dict(ckpt.config) != config_to_dict(cfg):
            raise ConfigError("checkpoint config does not match the requested config")
        network, optimizer, shadow, thresholds, rng = ckpt.restore()
        start = ckpt.iteration
        if thresholds is None and cfg.adaptive_thresholds:
            raise ConfigError("checkpoint lacks threshold state for an adaptive mode")
    else:
        children = np.random.SeedSequence(cfg.seed).spawn(5)
        network = Network(arch, np.random.default_rng(children[3]))
        rng = np.random.default_rng(children[4])
        optimizer = SgdMomentum(network.params, lr=cfg.optimizer.lr, momentum=cfg.optimizer.momentum)
        shadow = EmaShadow(network.params, decay=cfg.optimizer.shadow_decay)
        if cfg.adaptive_thresholds:
            window = batches_per_pass(dataset.unlabeled_x.shape[0], batch_cfg.unlabeled)
            thresholds = ThresholdState(
                num_classes, decay=cfg.thresholds.ema_decay, window_batches=window
            )
        else:
            thresholds = None
        start = 0

    stream = BatchStream(dataset, cfg.batch.labeled, cfg.batch.mu, weak_policy, strong_policy, rng)

    end = cfg.iterations if stop_after is None else min(cfg.iterations, start + stop_after)
    if start > end:
        raise ConfigError(f"checkpoint is at iteration {start}, beyond the configured {end}")

    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_config(cfg, os.path.join(out_dir, "config.json"))
        writer = MetricsWriter(os.path.join(out_dir, "metrics.csv"), num_classes)

    mu_b = batch_cfg.unlabeled
    rows: list[dict] = []
    try:
        for t in range(start, end):
            try:
                labeled, unlabeled = stream.next_pair()

                if thresholds is not None:
                    tau = thresholds.tau
                    sigma = thresholds.local()
                else:
                    tau = cfg.thresholds.fixed_value
                    sigma = np.full(num_classes, tau)

                weak_probs_cache = network.forward(unlabeled.weak)
                decisions = decide_pseudo_labels(weak_probs_cache.probs, sigma)
                rejected = np.nonzero(~decisions.accepted)[0]

                lam_c = contrastive_weight(
                    t,
                    cfg.weights.contrast_init if cfg.use_contrastive else 0.0,
                    cfg.weights.contrast_timescale,
                )
                if cfg.use_contrastive:
                    strong_emb = network.forward(unlabeled.strong).embedding
                    plan = contrast.build_plan(
                        weak_probs_cache.embedding,
                        strong_emb,
                        rejected,
                        temperature=cfg.contrastive.temperature,
                        eps_weak=cfg.contrastive.eps_weak,
                        eps_strong=cfg.contrastive.eps_strong,
                        negatives_per_anchor=cfg.contrastive.negatives,
                        rng=rng,
                    )
                    anchors, skipped = plan.num_anchors, plan.skipped
                    mean_pos = plan.mean_positive_size
                else:
                    plan = None
                    anchors, skipped, mean_pos = 0, int(rejected.shape[0]), 0.0

                if decisions.num_accepted + anchors + skipped != mu_b:
                    raise RuntimeError(
                        f"iteration {t}: partition broken: "
                        f"{decisions.num_accepted}+{anchors}+{skipped} != {mu_b}"
                    )

                values, grads = assemble_terms(
                    network, labeled, unlabeled, decisions, plan,
                    cfg.weights.unsupervised, lam_c,
                )

                # counts use the tau that produced sigma; the EMA moves after
                if thresholds is not None:
                    thresholds.observe(weak_probs_cache.probs)
                    thresholds.update_global(weak_probs_cache.probs)
            except NumericalError:
                # parameters are still the last finite ones; keep them
                if out_dir is not None:
                    save_checkpoint(
                        os.path.join(out_dir, "checkpoint.npz"),
                        config=cfg, arch=arch, iteration=t, network=network,
                        optimizer=optimizer, shadow=shadow,
                        threshold_state=thresholds, rng=rng,
                    )
                raise

            lr = learning_rate(cfg.optimizer.lr, t, cfg.iterations, cfg.optimizer.cosine_decay)
            optimizer.step(network.params, grads, lr)
            shadow.update(network.params)

            diag = pseudo_label_diagnostics(decisions, dataset.hidden_labels[unlabeled.indices])
            eval_accuracy = None
            if (t + 1) % cfg.eval_interval == 0 or t == cfg.iterations - 1:
                eval_accuracy, _ = evaluate(shadow.snapshot_network(arch), eval_x, eval_y)
            row = {
                "iteration": t,
                "loss_sup": values.loss_sup,
                "loss_unsup": values.loss_unsup,
                "loss_contrast": values.loss_contrast,
                "loss_total": values.total(cfg.weights.unsupervised),
                "lambda_contrast": lam_c,
                "tau": tau,
                **{f"sigma_{c}": float(sigma[c]) for c in range(num_classes)},
                "accepted": decisions.num_accepted,
                "anchors": anchors,
                "anchors_skipped": skipped,
                "mean_positive_size": mean_pos,
                **diag,
                "eval_accuracy": eval_accuracy,
            }
            rows.append(row)
            if writer is not None:
                writer.append(row)
    finally:
        if writer is not None:
            writer.close()

    final_accuracy, confusion = evaluate(shadow.snapshot_network(arch), eval_x, eval_y)
    tail = max(1, round(0.1 * len(rows))) if rows else 0
    tail_rows = rows[-tail:] if tail else []
    summary = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "iterations_total": cfg.iterations,
        "iterations_done": end,
        "backend": K.ACTIVE_BACKEND,
        "final_accuracy": final_accuracy,
        "mean_quantity_last_tenth": (
            float(np.mean([r["quantity"] for r in tail_rows])) if tail_rows else None
        ),
        "mean_quality_last_tenth": (
            float(np.mean([r["quality"] for r in tail_rows])) if tail_rows else None
        ),
        "final_tau": thresholds.tau if thresholds is not None else cfg.thresholds.fixed_value,
        "final_sigma": (
            [float(v) for v in thresholds.local()]
            if thresholds is not None
            else [cfg.thresholds.fixed_value] * num_classes
        ),
        "anchors_skipped_total": int(sum(r["anchors_skipped"] for r in rows)) if rows else 0,
    }
    if out_dir is not None:
        write_summary(os.path.join(out_dir, "summary.json"), summary)
        write_confusion(os.path.join(out_dir, "confusion.csv"), confusion)
        save_checkpoint(
            os.path.join(out_dir, "checkpoint.npz"),
            config=cfg, arch=arch, iteration=end, network=network,
            optimizer=optimizer, shadow=shadow, threshold_state=thresholds, rng=rng,
        )
    return TrainResult(
        config=cfg,
        rows=rows,
        summary=summary,
        final_accuracy=final_accuracy,
        confusion=confusion,
        network=network,
        shadow=shadow,
        optimizer=optimizer,
        thresholds=thresholds,
        rng=rng,
        arch=arch,
        iteration=end,
        out_dir=out_dir,
        dataset=dataset,
        eval_x=eval_x,
        eval_y=eval_y,
    )
