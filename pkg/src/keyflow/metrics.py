"""Production-side evaluation: dynamic time warping over joint positions,
similarity (Procrustes) alignment, and the DTW-JPE / DTW-PA-JPE scores.

DTW distances are path-length normalized so scores are comparable across
sequence lengths. The hand score uses all 30 hand joints in wrist-relative
coordinates so hand error is not dominated by arm error. The PA variant
aligns the predicted frame onto the ground-truth frame with a similarity
transform inside the cost function, per frame pair.
"""

from dataclasses import dataclass

import numpy as np

from . import skeleton
from .errors import DegenerateConfiguration, Empty

BODY_IDX = np.array(skeleton.BODY_JOINTS)
LEFT_IDX = np.array(skeleton.LEFT_HAND_JOINTS)
RIGHT_IDX = np.array(skeleton.RIGHT_HAND_JOINTS)


@dataclass
class DtwResult:
    distance: float  # mean cost along the optimal path
    path: list  # [(i, j), ...] monotone, (0,0) .. (T1-1, T2-1)


def _default_cost_matrix(a, b):
    """Mean-over-joints Euclidean distance for every frame pair."""
    diff = a[:, None, :, :] - b[None, :, :, :]  # (T1, T2, N, 3)
    return np.linalg.norm(diff, axis=-1).mean(axis=-1)


def dtw(a, b, cost=None):
    """Classic dynamic time warping with the three-step neighborhood.

    a, b: (T, N, 3) joint sequences (any (T, ...) works with an explicit
    cost). cost: optional callable(frame_a, frame_b) -> real; defaults to
    the mean Euclidean distance over joints. The reported distance is the
    optimal path's summed cost divided by its length.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    t1, t2 = a.shape[0], b.shape[0]
    if t1 == 0 or t2 == 0:
        raise Empty("dtw requires nonempty sequences")

    if cost is None:
        c = _default_cost_matrix(a, b)
    elif callable(cost):
        c = np.empty((t1, t2))
        for i in range(t1):
            for j in range(t2):
                c[i, j] = cost(a[i], b[j])
    else:
        c = np.asarray(cost, dtype=np.float64)  # precomputed matrix

    d = np.full((t1 + 1, t2 + 1), np.inf)
    d[0, 0] = 0.0
    for i in range(1, t1 + 1):
        row = d[i]
        above = d[i - 1]
        ci = c[i - 1]
        for j in range(1, t2 + 1):
            row[j] = ci[j - 1] + min(above[j - 1], above[j], row[j - 1])

    # backtrack, preferring the diagonal on ties
    path = []
    i, j = t1, t2
    while i > 0 and j > 0:
        path.append((i - 1, j - 1))
        moves = ((d[i - 1, j - 1], i - 1, j - 1), (d[i - 1, j], i - 1, j), (d[i, j - 1], i, j - 1))
        _, i, j = min(moves, key=lambda m: m[0])
    path.reverse()
    total = float(sum(c[i, j] for i, j in path))
    return DtwResult(distance=total / len(path), path=path)


# ---------------------------------------------------------------------------
# Similarity alignment (Umeyama)


def similarity_transform(p, q):
    """Least-squares similarity s, R, t with min sum ||s R p + t - q||^2.

    Reflections are excluded (det(R) = +1 via sign correction). Raises
    DegenerateConfiguration for fewer than 3 points or collinear input.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2 or p.shape[1] != 3:
        raise DegenerateConfiguration(f"point sets must be matching (N, 3), got {p.shape} / {q.shape}")
    n = p.shape[0]
    if n < 3:
        raise DegenerateConfiguration("need at least 3 points")

    mu_p = p.mean(axis=0)
    mu_q = q.mean(axis=0)
    x = p - mu_p
    y = q - mu_q
    cov = y.T @ x / n
    u, d, vt = np.linalg.svd(cov)
    var_p = float(np.sum(x * x)) / n
    if var_p < 1e-24 or d[1] < 1e-12 * max(d[0], 1.0):
        raise DegenerateConfiguration("points are collinear or coincident")

    s_diag = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_diag[2] = -1.0
    r = u @ np.diag(s_diag) @ vt
    s = float(np.sum(d * s_diag)) / var_p
    t = mu_q - s * r @ mu_p
    return s, r, t


def procrustes_align(p, q):
    """Apply the best similarity transform of p onto q; returns aligned p."""
    s, r, t = similarity_transform(p, q)
    return s * p @ r.T + t


def _pa_cost_matrix(a, b):
    """Per-frame-pair Procrustes-aligned mean joint distance, batched.

    a: (T1, N, 3) predicted frames, b: (T2, N, 3) reference frames.
    Frames too degenerate for a similarity fit fall back to the unaligned
    cost (cannot happen for real poses of the built-in rig).
    """
    t1, t2, n = a.shape[0], b.shape[0], a.shape[1]
    a0 = a - a.mean(axis=1, keepdims=True)
    b0 = b - b.mean(axis=1, keepdims=True)
    cov = np.einsum("jna,inb->ijab", b0, a0) / n  # (T1, T2, 3, 3)
    u, d, vt = np.linalg.svd(cov)
    det = np.linalg.det(u) * np.linalg.det(vt)
    s_diag = np.ones((t1, t2, 3))
    s_diag[..., 2] = np.where(det < 0, -1.0, 1.0)
    r = (u * s_diag[..., None, :]) @ vt
    var_a = np.sum(a0 * a0, axis=(1, 2)) / n  # (T1,)
    degenerate = var_a < 1e-24
    scale = np.sum(d * s_diag, axis=-1) / np.where(degenerate[:, None], 1.0, var_a[:, None])

    aligned = scale[..., None, None] * np.einsum("ijab,inb->ijna", r, a0)
    resid = np.linalg.norm(aligned - b0[None], axis=-1).mean(axis=-1)
    if np.any(degenerate):
        plain = _default_cost_matrix(a0, b0)
        resid = np.where(degenerate[:, None], plain, resid)
    return resid


def _joint_sets(seq, skel):
    """FK a sequence and split into body and wrist-relative hand point sets."""
    pos = skeleton.fk_sequence(seq.frames, skel)  # (T, 41, 3)
    body = pos[:, BODY_IDX]
    left = pos[:, LEFT_IDX] - pos[:, skeleton.LEFT_WRIST, None, :]
    right = pos[:, RIGHT_IDX] - pos[:, skeleton.RIGHT_WRIST, None, :]
    hand = np.concatenate([left, right], axis=1)  # (T, 30, 3)
    return body, hand


def dtw_jpe(pred, gt, skel):
    """Unaligned DTW joint position error: {'body': ..., 'hand': ...} (meters)."""
    pb, ph = _joint_sets(pred, skel)
    gb, gh = _joint_sets(gt, skel)
    return {"body": dtw(pb, gb).distance, "hand": dtw(ph, gh).distance}


def dtw_pa_jpe(pred, gt, skel):
    """Procrustes-aligned DTW joint position error (per frame pair)."""
    pb, ph = _joint_sets(pred, skel)
    gb, gh = _joint_sets(gt, skel)
    return {
        "body": dtw(pb, gb, cost=_pa_cost_matrix(pb, gb)).distance,
        "hand": dtw(ph, gh, cost=_pa_cost_matrix(ph, gh)).distance,
    }
