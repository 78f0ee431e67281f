"""SLERP in-betweening baseline: per-joint spherical interpolation between
consecutive anchor frames, with constant-hold extrapolation outside the
anchor span."""

import numpy as np

from . import rotmath, skeleton
from .errors import NoAnchors, ShapeMismatch
from .motiondata import MotionSequence


def slerp_inbetween(mask, anchors, fps=25.0):
    """Interpolate a full sequence from sparse anchor poses.

    mask: (T,) booleans. anchors: either (T, 246) with rows read at
    mask-true frames, or (K, 246) rows for the K true frames in order.
    Between consecutive anchors f_a < f_b, frame f gets per-joint slerp at
    t = (f - f_a)/(f_b - f_a); frames outside the anchor span hold the
    nearest anchor. Anchor frames are reproduced bitwise.
    """
    mask = np.asarray(mask, dtype=bool)
    t_total = len(mask)
    idx = np.nonzero(mask)[0]
    if len(idx) == 0:
        raise NoAnchors("slerp baseline needs at least one anchor")

    anchors = np.asarray(anchors)
    if anchors.ndim != 2 or anchors.shape[1] != skeleton.POSE_DIM:
        raise ShapeMismatch(f"anchors must be (*, {skeleton.POSE_DIM}), got {anchors.shape}")
    if anchors.shape[0] == t_total:
        key_poses = anchors[idx]
    elif anchors.shape[0] == len(idx):
        key_poses = anchors
    else:
        raise ShapeMismatch(
            f"anchors rows ({anchors.shape[0]}) must match T ({t_total}) or mask count ({len(idx)})"
        )

    key32 = np.ascontiguousarray(key_poses, dtype=np.float32)
    key_quats = rotmath.matrix_to_quat(
        rotmath.rot6d_to_matrix(key32.astype(np.float64).reshape(-1, skeleton.NUM_JOINTS, 6))
    )  # (K, 41, 4)

    out = np.empty((t_total, skeleton.POSE_DIM), dtype=np.float32)
    out[: idx[0] + 1] = key32[0]
    out[idx[-1] :] = key32[-1]
    for k in range(len(idx) - 1):
        fa, fb = int(idx[k]), int(idx[k + 1])
        inner = np.arange(fa + 1, fb)
        if inner.size:
            ts = (inner - fa) / (fb - fa)
            q = rotmath.quat_slerp(key_quats[k], key_quats[k + 1], ts[:, None])
            poses = rotmath.matrix_to_rot6d(rotmath.quat_to_matrix(q))
            out[inner] = poses.reshape(len(inner), skeleton.POSE_DIM)
    out[idx] = key32  # anchors bitwise
    return MotionSequence(out, fps)
