"""Rotation representations and interpolation.

Conventions used throughout the package:

* 6D rotation: the first two columns of a rotation matrix, stored
  column-major, i.e. ``[m00, m10, m20, m01, m11, m21]``.
* Rotation matrix: (..., 3, 3), columns orthonormal, det = +1.
* Quaternion: (..., 4) as (w, x, y, z), unit norm, canonicalized to w >= 0.

All functions broadcast over leading batch axes.
"""

import numpy as np

from .errors import DegenerateRotation, ParameterOutOfRange

# Gram-Schmidt degeneracy threshold: well above double-precision noise,
# far below any meaningful pose.
DEGENERACY_EPS = 1e-8

# Beyond this dot product two quaternions are treated as parallel and
# slerp falls back to normalized lerp.
SLERP_PARALLEL_EPS = 1e-7


def identity_rot6d():
    return np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def rot6d_to_matrix(r):
    """Orthonormalize a 6D rotation into a proper rotation matrix.

    Gram-Schmidt: b1 = normalize(a1), b2 = normalize(a2 - (a2.b1) b1),
    b3 = b1 x b2, where a1/a2 are the two stored columns.

    Raises DegenerateRotation if a1 is near zero or a2 is parallel to a1.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise DegenerateRotation(f"expected 6 components, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise DegenerateRotation("non-finite 6D rotation input")
    a1 = r[..., 0:3]
    a2 = r[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 < DEGENERACY_EPS):
        raise DegenerateRotation("first 6D column has near-zero norm")
    b1 = a1 / n1
    a2_orth = a2 - np.sum(a2 * b1, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(a2_orth, axis=-1, keepdims=True)
    if np.any(n2 < DEGENERACY_EPS):
        raise DegenerateRotation("second 6D column is parallel to the first")
    b2 = a2_orth / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def matrix_to_rot6d(m):
    """Read back the first two columns of a rotation matrix (column-major)."""
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def matrix_to_quat(m):
    """Convert rotation matrices to unit quaternions (w, x, y, z), w >= 0.

    Uses the per-element branch with the largest diagonal combination for
    numerical stability near 180-degree rotations.
    """
    m = np.asarray(m, dtype=np.float64)
    m00, m01, m02 = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
    m10, m11, m12 = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
    m20, m21, m22 = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]

    c = np.stack(
        [
            1.0 + m00 + m11 + m22,  # 4w^2
            1.0 + m00 - m11 - m22,  # 4x^2
            1.0 - m00 + m11 - m22,  # 4y^2
            1.0 - m00 - m11 + m22,  # 4z^2
        ],
        axis=-1,
    )
    branch = np.argmax(c, axis=-1)
    t = np.maximum(np.take_along_axis(c, branch[..., None], axis=-1)[..., 0], 1e-300)
    s = 0.5 / np.sqrt(t)

    cand = np.stack(
        [
            np.stack([t, m21 - m12, m02 - m20, m10 - m01], axis=-1),
            np.stack([m21 - m12, t, m01 + m10, m02 + m20], axis=-1),
            np.stack([m02 - m20, m01 + m10, t, m12 + m21], axis=-1),
            np.stack([m10 - m01, m02 + m20, m12 + m21, t], axis=-1),
        ],
        axis=-2,
    )
    q = np.take_along_axis(cand, branch[..., None, None], axis=-2)[..., 0, :]
    q = q * s[..., None]
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    # canonical sign
    neg = q[..., 0:1] < 0.0
    return np.where(neg, -q, q)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def quat_slerp(q0, q1, t):
    """Spherical interpolation between unit quaternions.

    Shortest arc (q1 is negated when the dot product is negative); falls
    back to normalized linear interpolation when the endpoints are nearly
    parallel. t=0 and t=1 return the endpoints exactly.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)

    dot = np.sum(q0 * q1, axis=-1)
    sign = np.where(dot < 0.0, -1.0, 1.0)
    q1s = q1 * sign[..., None]
    dot = np.abs(dot)

    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    parallel = dot > 1.0 - SLERP_PARALLEL_EPS
    safe_sin = np.where(parallel, 1.0, sin_theta)

    t_b = t[..., None]
    w0 = np.where(parallel, 1.0 - t, np.sin((1.0 - t) * theta) / safe_sin)[..., None]
    w1 = np.where(parallel, t, np.sin(t * theta) / safe_sin)[..., None]
    out = w0 * q0 + w1 * q1s
    out = out / np.linalg.norm(out, axis=-1, keepdims=True)

    out = np.where(t_b == 0.0, np.broadcast_to(q0, out.shape), out)
    out = np.where(t_b == 1.0, np.broadcast_to(q1, out.shape), out)
    return out


def slerp_rot6d(a, b, t):
    """Spherical interpolation in 6D space via quaternions.

    t must lie in [0, 1]; raises ParameterOutOfRange otherwise.
    Propagates DegenerateRotation from the 6D conversions.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ParameterOutOfRange(f"slerp parameter outside [0,1]: {t}")
    qa = matrix_to_quat(rot6d_to_matrix(a))
    qb = matrix_to_quat(rot6d_to_matrix(b))
    q = quat_slerp(qa, qb, t_arr)
    return matrix_to_rot6d(quat_to_matrix(q))


def axis_angle_to_matrix(axis, angle):
    """Rodrigues formula; axis (..., 3) need not be unit, angle in radians."""
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    n = np.linalg.norm(axis, axis=-1, keepdims=True)
    u = axis / np.maximum(n, 1e-12)
    ux, uy, uz = u[..., 0], u[..., 1], u[..., 2]
    zero = np.zeros_like(ux)
    k = np.stack(
        [
            np.stack([zero, -uz, uy], axis=-1),
            np.stack([uz, zero, -ux], axis=-1),
            np.stack([-uy, ux, zero], axis=-1),
        ],
        axis=-2,
    )
    eye = np.broadcast_to(np.eye(3), k.shape)
    s = np.sin(angle)[..., None, None]
    c = (1.0 - np.cos(angle))[..., None, None]
    return eye + s * k + c * (k @ k)


def rotation_angle(m):
    """Angle of a rotation matrix in radians, in [0, pi]."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[..., 0, 0] + m[..., 1, 1] + m[..., 2, 2]
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
