"""Contrastive objective over low-confidence unlabeled samples.

Samples rejected by the thresholds still carry signal.  For each rejected
sample (the anchor) we score every other weak-view embedding in the batch
by a temperature-softmaxed cosine similarity, once from the anchor's weak
view and once from its strong view.  Candidates scoring high under both
views form the anchor's positive set; their mean embedding is the positive
prototype.  The anchor is then pulled toward the prototype and pushed from
uniformly sampled non-positive candidates with an InfoNCE-style term.

Selection (positive sets, negative draws) is discrete and carries no
gradient; the loss differentiates only through the weak-view embeddings.
``build_plan`` freezes all selections into a plan so that the loss is a
smooth function of the embeddings given the plan, which is also what makes
the finite-difference checks meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import ConfigError


@dataclass
class ContrastivePlan:
    """Frozen anchor/positive/negative selections for one batch.

    anchors:    batch indices of rejected samples with non-empty positives
    members:    per anchor, indices whose weak embeddings form the prototype
    negatives:  per anchor, indices contrasted against the prototype
    skipped:    rejected samples that found no positives (or no negatives)
    """

    batch_size: int
    temperature: float
    anchors: np.ndarray
    members: list[np.ndarray] = field(default_factory=list)
    negatives: list[np.ndarray] = field(default_factory=list)
    skipped: int = 0

    @property
    def num_anchors(self) -> int:
        return int(self.anchors.shape[0])

    @property
    def mean_positive_size(self) -> float:
        if not self.members:
            return 0.0
        return float(np.mean([m.shape[0] for m in self.members]))


def _softmax1d(v: np.ndarray) -> np.ndarray:
    m = v.max()
    e = np.exp(v - m)
    return e / e.sum()


def relation_distribution(
    anchor: np.ndarray, candidates: np.ndarray, temperature: float
) -> np.ndarray:
    """Softmax over cosine(anchor, candidate)/temperature across candidates.

    Sharpens toward the nearest candidate as the temperature drops; the
    output is a probability vector over the candidate axis.
    """
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    cand = np.asarray(candidates, dtype=np.float64)
    if cand.ndim != 2 or cand.shape[0] < 1:
        raise ValueError(f"need a non-empty (k, d) candidate matrix, got shape {cand.shape}")
    a = np.asarray(anchor, dtype=np.float64).reshape(1, -1)
    sims = K.cosine_matrix(a, cand)[0]
    return _softmax1d(sims / temperature)


def select_positive_set(
    rel_weak: np.ndarray,
    rel_strong: np.ndarray,
    eps_weak: float,
    eps_strong: float,
) -> np.ndarray:
    """Candidate positions scoring strictly above both view cutoffs.

    The two relation vectors must be aligned over the same candidates (the
    anchor itself is never a candidate).  Returns positions into them.
    """
    w = np.asarray(rel_weak, dtype=np.float64)
    s = np.asarray(rel_strong, dtype=np.float64)
    if w.shape != s.shape:
        raise ValueError(f"relation vectors disagree: {w.shape} vs {s.shape}")
    return np.nonzero((w > eps_weak) & (s > eps_strong))[0]


def positive_prototype(member_embeddings: np.ndarray) -> np.ndarray:
    """Mean of the positive members' embeddings.  Empty sets are an error;
    callers decide beforehand whether an anchor participates."""
    emb = np.asarray(member_embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] == 0:
        raise ValueError("positive prototype needs at least one member")
    return emb.mean(axis=0)


def sample_negatives(
    pool: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform draw without replacement; shrinks to the pool when small."""
    p = np.asarray(pool, dtype=np.int64)
    if p.shape[0] == 0:
        raise ValueError("negative pool is empty")
    if count < 1:
        raise ConfigError(f"need >= 1 negative, got {count}")
    return rng.choice(p, size=min(count, p.shape[0]), replace=False)


def build_plan(
    weak_emb: np.ndarray,
    strong_emb: np.ndarray,
    rejected: np.ndarray,
    *,
    temperature: float,
    eps_weak: float,
    eps_strong: float,
    negatives_per_anchor: int,
    rng: np.random.Generator,
) -> ContrastivePlan:
    """Select positives and negatives for every rejected sample.

    Candidates for an anchor are all other weak-view embeddings in the
    batch.  Rejected samples whose positive set (or negative pool) comes up
    empty are counted in ``skipped`` and contribute nothing to the loss.
    """
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    zw = np.asarray(weak_emb, dtype=np.float64)
    zs = np.asarray(strong_emb, dtype=np.float64)
    if zw.shape != zs.shape:
        raise ValueError(f"view embedding shapes disagree: {zw.shape} vs {zs.shape}")
    n = zw.shape[0]
    rej = np.asarray(rejected, dtype=np.int64)

    anchors: list[int] = []
    members: list[np.ndarray] = []
    negatives: list[np.ndarray] = []
    skipped = 0

    if rej.shape[0] > 0 and n >= 2:
        sims_ww = K.cosine_matrix(zw, zw)
        sims_sw = K.cosine_matrix(zs, zw)
        all_idx = np.arange(n, dtype=np.int64)
        for i in rej.tolist():
            cand = np.delete(all_idx, i)
            rel_w = _softmax1d(sims_ww[i, cand] / temperature)
            rel_s = _softmax1d(sims_sw[i, cand] / temperature)
            pos = select_positive_set(rel_w, rel_s, eps_weak, eps_strong)
            if pos.shape[0] == 0:
                skipped += 1
                continue
            pool = np.delete(cand, pos)
            if pool.shape[0] == 0:
                skipped += 1
                continue
            anchors.append(i)
            members.append(cand[pos])
            negatives.append(sample_negatives(pool, negatives_per_anchor, rng))
    else:
        skipped = int(rej.shape[0])

    return ContrastivePlan(
        batch_size=n,
        temperature=temperature,
        anchors=np.asarray(anchors, dtype=np.int64),
        members=members,
        negatives=negatives,
        skipped=skipped,
    )


def _cosine_with_grads(a: np.ndarray, b: np.ndarray):
    """cos(a, b) plus its gradients w.r.t. both vectors (no clipping, so the
    value and the gradient stay consistent)."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vector")
    inv = 1.0 / (na * nb)
    cos = float(a @ b) * inv
    da = b * inv - cos * a / (na * na)
    db = a * inv - cos * b / (nb * nb)
    return cos, da, db


def loss_and_grad(plan: ContrastivePlan, weak_emb: np.ndarray):
    """Contrastive loss and its gradient w.r.t. the weak-view embeddings.

    Per anchor: logits are cosine(anchor, prototype) and cosine(anchor,
    negative_j), all divided by the temperature; the term is the negative
    log-softmax mass on the prototype slot.  Anchor terms are summed and
    normalized by the full batch size (skipped anchors dilute the loss
    rather than inflate it).
    """
    z = np.asarray(weak_emb, dtype=np.float64)
    dz = np.zeros_like(z)
    if plan.num_anchors == 0:
        return 0.0, dz
    inv_t = 1.0 / plan.temperature
    total = 0.0
    for a, mem, neg in zip(plan.anchors.tolist(), plan.members, plan.negatives):
        za = z[a]
        proto = z[mem].mean(axis=0)
        s0, d_a0, d_proto = _cosine_with_grads(za, proto)
        logits = [s0 * inv_t]
        neg_grads = []
        for j in neg.tolist():
            sj, d_aj, d_bj = _cosine_with_grads(za, z[j])
            logits.append(sj * inv_t)
            neg_grads.append((j, d_aj, d_bj))
        logits = np.asarray(logits)
        mx = logits.max()
        log_denom = mx + np.log(np.exp(logits - mx).sum())
        total += log_denom - logits[0]
        soft = np.exp(logits - log_denom)

        g0 = (soft[0] - 1.0) * inv_t
        dz[a] += g0 * d_a0
        dz[mem] += (g0 / mem.shape[0]) * d_proto
        for (j, d_aj, d_bj), w in zip(neg_grads, soft[1:]):
            gj = w * inv_t
            dz[a] += gj * d_aj
            dz[j] += gj * d_bj

    scale = 1.0 / plan.batch_size
    return float(total * scale), dz * scale


def plan_loss(plan: ContrastivePlan, weak_emb: np.ndarray) -> float:
    """Loss only, for derivative-free checks against loss_and_grad."""
    return loss_and_grad(plan, weak_emb)[0]
