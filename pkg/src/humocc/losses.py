"""Occupancy training losses as plain numpy kernels with analytic gradients.

Inputs are voxel logits or probabilities shaped ``(..., K+1)`` (class 0 is
FREE) and integer targets shaped ``(...)``. Voxels labeled UNOBSERVED (255)
in the target are excluded from every term and receive zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FREE, UNOBSERVED, OccupancyGrid

DEGENERATE_SCENE = "DEGENERATE_SCENE"


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    def __add__(self, other):
        return LossValue(self.value + other.value, self.gradient + other.gradient,
                         self.flags | other.flags)


def _target_array(target):
    if isinstance(target, OccupancyGrid):
        return target.voxels.astype(np.int64)
    return np.asarray(target).astype(np.int64)


def _flatten(x, target):
    x = np.asarray(x, dtype=np.float64)
    t = _target_array(target)
    if x.shape[:-1] != t.shape:
        raise ValueError(f"scores {x.shape} do not match target {t.shape}")
    flat = x.reshape(-1, x.shape[-1])
    tf = t.reshape(-1)
    valid = tf != UNOBSERVED
    return flat, tf, valid


def _scatter(grad_valid, valid, shape):
    g = np.zeros((valid.size, shape[-1]))
    g[valid] = grad_valid
    return g.reshape(shape)


def softmax_probs(logits):
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs, grad_probs):
    """Chain a gradient w.r.t. probabilities through the softmax."""
    return probs * (grad_probs - np.sum(grad_probs * probs, axis=-1, keepdims=True))


def focal_loss(logits, target, gamma=2.0, alpha=None) -> LossValue:
    """Mean over voxels of ``-alpha_c (1 - p_c)^gamma log p_c``; gradient w.r.t. logits."""
    flat, t, valid = _flatten(logits, target)
    z, t = flat[valid], t[valid]
    n, c = z.shape
    if n == 0:
        return LossValue(0.0, np.zeros_like(np.asarray(logits, dtype=np.float64)))
    a = np.ones(c) if alpha is None else np.asarray(alpha, dtype=np.float64)
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1))
    rows = np.arange(n)
    logp = zs[rows, t] - lse
    p = np.exp(logp)
    q = -np.expm1(logp)  # 1 - p without cancellation
    at = a[t]
    mod = q ** gamma
    value = float(np.sum(-at * mod * logp) / n)
    # d/dp of -a (1-p)^g log p
    with np.errstate(divide="ignore", invalid="ignore"):
        dmod = np.where(q > 0, gamma * q ** (gamma - 1.0), 0.0) if gamma != 0 else 0.0
    dfdp = at * (dmod * logp - mod / p)
    probs = np.exp(zs - lse[:, None])
    onehot = np.zeros_like(probs)
    onehot[rows, t] = 1.0
    grad = (dfdp * p)[:, None] * (onehot - probs) / n
    return LossValue(value, _scatter(grad, valid, np.shape(logits)))


def cross_entropy(logits, target) -> float:
    flat, t, valid = _flatten(logits, target)
    z, t = flat[valid], t[valid]
    if len(t) == 0:
        return 0.0
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs[np.arange(len(t)), t] - np.log(np.exp(zs).sum(axis=1))
    return float(-logp.mean())


def lovasz_grad(gt_sorted):
    """Gradient of the Lovasz extension of the Jaccard loss w.r.t. sorted errors."""
    gts = gt_sorted.sum()
    intersection = gts - np.cumsum(gt_sorted)
    union = gts + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax(probs, target, classes="present") -> LossValue:
    """Lovasz-softmax loss averaged over classes present in the target.

    The gradient (w.r.t. ``probs``) is the subgradient picked by the sort
    order, i.e. exact wherever no two errors of a class tie.
    """
    flat, t, valid = _flatten(probs, target)
    p, t = flat[valid], t[valid]
    n, c = p.shape
    grad = np.zeros_like(p)
    losses = []
    for k in range(c):
        fg = (t == k).astype(np.float64)
        if classes == "present" and fg.sum() == 0:
            continue
        errors = np.abs(fg - p[:, k])
        order = np.argsort(-errors, kind="stable")
        g = lovasz_grad(fg[order])
        losses.append(float(errors[order] @ g))
        sign = np.where(fg > 0, -1.0, 1.0)
        grad[order, k] = g * sign[order]
    if not losses:
        return LossValue(0.0, np.zeros_like(np.asarray(probs, dtype=np.float64)))
    m = len(losses)
    return LossValue(float(np.sum(losses) / m), _scatter(grad / m, valid, np.shape(probs)))


def _prs_terms(q, y):
    """``-log precision - log recall - log specificity`` from soft counts.

    ``q`` is the soft positive score, ``y`` the binary target. Undefined terms
    are skipped. Returns ``(value, dvalue/dq, skipped_terms)``.
    """
    inter = float(np.sum(q * y))
    qs = float(q.sum())
    ys = float(y.sum())
    neg = 1.0 - y
    ns = float(neg.sum())
    value = 0.0
    grad = np.zeros_like(q)
    skipped = []
    # with no positives in the target the precision is 0 for any prediction
    if qs > 0 and ys > 0:
        value -= np.log(inter / qs)
        grad += -y / inter + 1.0 / qs
    else:
        skipped.append("precision")
    if ys > 0:
        value -= np.log(inter / ys)
        grad += -y / inter
    else:
        skipped.append("recall")
    if ns > 0:
        spec = float(np.sum((1.0 - q) * neg))
        value -= np.log(spec / ns)
        grad += neg / spec
    else:
        skipped.append("specificity")
    return value, grad, skipped


def scal_geo(probs, target) -> LossValue:
    """Scene-wise affinity loss on the occupied-vs-free split (``p_occ = 1 - p_free``)."""
    flat, t, valid = _flatten(probs, target)
    p, t = flat[valid], t[valid]
    q = 1.0 - p[:, FREE]
    y = (t != FREE).astype(np.float64)
    value, dq, skipped = _prs_terms(q, y)
    grad = np.zeros_like(p)
    grad[:, FREE] = -dq
    flags = frozenset({DEGENERATE_SCENE}) if ("recall" in skipped or "specificity" in skipped) \
        else frozenset()
    return LossValue(float(value), _scatter(grad, valid, np.shape(probs)), flags)


def scal_sem(probs, target) -> LossValue:
    """Class-wise affinity loss averaged over classes present in the target."""
    flat, t, valid = _flatten(probs, target)
    p, t = flat[valid], t[valid]
    grad = np.zeros_like(p)
    total = 0.0
    count = 0
    for k in range(p.shape[1]):
        y = (t == k).astype(np.float64)
        if y.sum() == 0:
            continue
        v, dq, _ = _prs_terms(p[:, k], y)
        total += v
        grad[:, k] = dq
        count += 1
    if count == 0:
        return LossValue(0.0, np.zeros_like(np.asarray(probs, dtype=np.float64)))
    return LossValue(float(total / count), _scatter(grad / count, valid, np.shape(probs)))


def total_loss(logits, target, gamma=2.0, alpha=None, return_terms=False):
    """Unit-weight sum of focal, Lovasz-softmax and both affinity losses.

    The returned gradient is w.r.t. the logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    probs = softmax_probs(logits)
    focal = focal_loss(logits, target, gamma, alpha)
    terms = {"focal": focal}
    for name, fn in (("lovasz", lovasz_softmax), ("scal_geo", scal_geo), ("scal_sem", scal_sem)):
        lv = fn(probs, target)
        terms[name] = LossValue(lv.value, softmax_backward(probs, lv.gradient), lv.flags)
    out = terms["focal"] + terms["lovasz"] + terms["scal_geo"] + terms["scal_sem"]
    return (out, terms) if return_terms else out
