"""Kinematic definition of the signing avatar and forward kinematics.

The rig is a fixed toy skeleton: 11 upper-body joints (spine root, neck,
head, and two clavicle -> shoulder -> elbow -> wrist arm chains) plus 15
joints per hand (five 3-joint finger chains rooted at each wrist).
Positions are root-relative; there is no global translation channel.

Pose layout (one frame = 246 reals):
    body joints   0..10  -> dims [0, 66)
    left hand    11..25  -> dims [66, 156)
    right hand   26..40  -> dims [156, 246)
"""

import json
from dataclasses import dataclass

import numpy as np

from . import rotmath
from .errors import BadLength

NUM_BODY_JOINTS = 11
NUM_HAND_JOINTS = 15
NUM_JOINTS = NUM_BODY_JOINTS + 2 * NUM_HAND_JOINTS  # 41
POSE_DIM = NUM_JOINTS * 6  # 246

BODY_SLICE = slice(0, 66)
LEFT_HAND_SLICE = slice(66, 156)
RIGHT_HAND_SLICE = slice(156, 246)

BODY_JOINTS = tuple(range(0, 11))
LEFT_HAND_JOINTS = tuple(range(11, 26))
RIGHT_HAND_JOINTS = tuple(range(26, 41))
LEFT_WRIST = 6
RIGHT_WRIST = 10

# Bone length table (meters)
SPINE_BONE = 0.25
CLAVICLE_OFFSET = (0.10, 0.20, 0.0)
SHOULDER_BONE = 0.15
ARM_BONE = 0.25
FINGER_BONE = 0.03
FINGER_SPREAD = 0.015


@dataclass(frozen=True)
class SkeletonDef:
    """Immutable joint hierarchy: names, parent indices (-1 = root), offsets."""

    names: tuple
    parents: np.ndarray  # (J,) int, parent[j] < j, root has -1
    offsets: np.ndarray  # (J, 3) float64, bone vector from parent to joint

    def __post_init__(self):
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.int64))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=np.float64))
        self.parents.setflags(write=False)
        self.offsets.setflags(write=False)

    @property
    def num_joints(self):
        return len(self.names)

    def bone_edges(self):
        """(parent, child) pairs for every non-root joint."""
        return [(int(p), j) for j, p in enumerate(self.parents) if p >= 0]

    def to_json_dict(self):
        return {
            "v": 1,
            "joints": [
                {"name": n, "parent": int(p), "offset": [float(x) for x in o]}
                for n, p, o in zip(self.names, self.parents, self.offsets)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_json_dict())


def default_skeleton():
    """Deterministic built-in rig with 41 joints in topological order."""
    names = []
    parents = []
    offsets = []

    def add(name, parent, offset):
        names.append(name)
        parents.append(parent)
        offsets.append(offset)
        return len(names) - 1

    root = add("root", -1, (0.0, 0.0, 0.0))
    neck = add("neck", root, (0.0, SPINE_BONE, 0.0))
    add("head", neck, (0.0, SPINE_BONE, 0.0))
    wrists = {}
    for side, sx in (("l", 1.0), ("r", -1.0)):
        clav = add(f"{side}_clavicle", root, (sx * CLAVICLE_OFFSET[0], CLAVICLE_OFFSET[1], 0.0))
        shoulder = add(f"{side}_shoulder", clav, (sx * SHOULDER_BONE, 0.0, 0.0))
        elbow = add(f"{side}_elbow", shoulder, (sx * ARM_BONE, 0.0, 0.0))
        wrists[side] = add(f"{side}_wrist", elbow, (sx * ARM_BONE, 0.0, 0.0))
    for side, sx in (("l", 1.0), ("r", -1.0)):
        for f in range(5):
            base = add(f"{side}_f{f}_0", wrists[side],
                       (sx * FINGER_BONE, 0.0, (f - 2) * FINGER_SPREAD))
            mid = add(f"{side}_f{f}_1", base, (sx * FINGER_BONE, 0.0, 0.0))
            add(f"{side}_f{f}_2", mid, (sx * FINGER_BONE, 0.0, 0.0))

    assert len(names) == NUM_JOINTS
    return SkeletonDef(tuple(names), np.array(parents), np.array(offsets))


class PoseFrame:
    """One pose: a (41, 6) array of per-joint 6D rotations."""

    __slots__ = ("rot6d",)

    def __init__(self, rot6d):
        rot6d = np.asarray(rot6d, dtype=np.float64)
        if rot6d.shape != (NUM_JOINTS, 6):
            raise BadLength(f"pose must be ({NUM_JOINTS}, 6), got {rot6d.shape}")
        self.rot6d = rot6d

    @classmethod
    def identity(cls):
        return cls(np.tile(rotmath.identity_rot6d(), (NUM_JOINTS, 1)))

    @property
    def body(self):
        return self.rot6d[0:11]

    @property
    def left_hand(self):
        return self.rot6d[11:26]

    @property
    def right_hand(self):
        return self.rot6d[26:41]

    def validate(self):
        """Raises DegenerateRotation if any joint rotation is degenerate."""
        rotmath.rot6d_to_matrix(self.rot6d)


def flatten(pose):
    """PoseFrame -> 246-vector (body dims [0,66), left [66,156), right [156,246))."""
    return pose.rot6d.reshape(POSE_DIM).copy()


def unflatten(v):
    """246-vector -> PoseFrame. Raises BadLength for wrong-size input."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (POSE_DIM,):
        raise BadLength(f"expected length {POSE_DIM}, got shape {v.shape}")
    return PoseFrame(v.reshape(NUM_JOINTS, 6))


def forward_kinematics(pose, skel):
    """Joint positions (41, 3) in root-relative coordinates.

    p[root] = 0; p[j] = p[parent] + R_global[parent] @ offset[j];
    R_global[j] = R_global[parent] @ R_local[j].
    """
    return fk_frames(pose.rot6d[None], skel)[0]


def fk_frames(rot6d, skel):
    """Batch forward kinematics: (T, 41, 6) local rotations -> (T, 41, 3) positions."""
    rot6d = np.asarray(rot6d, dtype=np.float64)
    local = rotmath.rot6d_to_matrix(rot6d)  # (T, J, 3, 3)
    t, j = local.shape[0], local.shape[1]
    glob = np.empty_like(local)
    pos = np.zeros((t, j, 3))
    for jj in range(j):
        parent = skel.parents[jj]
        if parent < 0:
            glob[:, jj] = local[:, jj]
        else:
            glob[:, jj] = glob[:, parent] @ local[:, jj]
            pos[:, jj] = pos[:, parent] + glob[:, parent] @ skel.offsets[jj]
    return pos


def fk_sequence(frames, skel):
    """Forward kinematics on flattened frames: (T, 246) -> (T, 41, 3)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != POSE_DIM:
        raise BadLength(f"expected (T, {POSE_DIM}), got {frames.shape}")
    return fk_frames(frames.reshape(-1, NUM_JOINTS, 6), skel)
