"""Sign segmentation: two-stream per-hand encoding, per-frame BIO
classification, CTC supervision of the segment count, keyframe mining,
and segmentation metrics.

Label indices follow the BIO convention: O=0 (outside), I=1 (inside),
B=2 (beginning). A segment is a maximal run starting at a B frame and
extending through the following I frames; its offset is the run's last
frame.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nnet
from .errors import (
    EmptyCorpus,
    InfeasibleTarget,
    LengthMismatch,
    NotNormalized,
    SchemaError,
    ShapeMismatch,
)
from .motiondata import B, I, O
from .nnet import Dense, NetSpec, SelfAttention, TemporalConv
from .skeleton import LEFT_HAND_SLICE, RIGHT_HAND_SLICE

CTC_WEIGHT = 0.1
CROP_MIN = 32
FRAME_DROP_P = 0.05


@dataclass
class HandFeatures:
    left: np.ndarray  # (T, 90)
    right: np.ndarray  # (T, 90)

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float64)
        self.right = np.asarray(self.right, dtype=np.float64)
        if self.left.shape != self.right.shape or self.left.ndim != 2 or self.left.shape[1] != 90:
            raise ShapeMismatch(
                f"hand features must be matching (T, 90) arrays, got {self.left.shape} / {self.right.shape}"
            )

    @classmethod
    def from_frames(cls, frames):
        frames = np.asarray(frames, dtype=np.float64)
        return cls(frames[:, LEFT_HAND_SLICE], frames[:, RIGHT_HAND_SLICE])


@dataclass(frozen=True)
class Segment:
    start: int  # the B frame
    end: int  # last I frame, inclusive


@dataclass
class FastModel:
    """Parallel per-hand streams (identical architecture, independent
    parameters) feeding a shared mixer/attention head with T x 3 logits."""

    stream_spec: NetSpec
    head_spec: NetSpec
    left: nnet.NetParams
    right: nnet.NetParams
    head: nnet.NetParams


def build_fast_model(rng, hidden=32, mixer=64):
    stream_spec = NetSpec(
        (
            TemporalConv(90, hidden, activation="gelu"),
            TemporalConv(hidden, hidden, activation="gelu"),
        )
    )
    head_spec = NetSpec(
        (
            Dense(2 * hidden, mixer, activation="gelu"),
            TemporalConv(mixer, mixer, activation="gelu"),
            SelfAttention(mixer),
            Dense(mixer, 3),
        )
    )
    return FastModel(
        stream_spec=stream_spec,
        head_spec=head_spec,
        left=nnet.init_params(stream_spec, rng),
        right=nnet.init_params(stream_spec, rng),
        head=nnet.init_params(head_spec, rng),
    )


def _forward_cached(model, feats):
    lo, lcache = nnet.net_forward(model.stream_spec, model.left, feats.left)
    ro, rcache = nnet.net_forward(model.stream_spec, model.right, feats.right)
    mixed = np.concatenate([lo, ro], axis=1)
    logits, hcache = nnet.net_forward(model.head_spec, model.head, mixed)
    return logits, (lcache, rcache, hcache)


def _backward(model, caches, dlogits):
    lcache, rcache, hcache = caches
    dhead, dmixed = nnet.net_backward(model.head_spec, model.head, hcache, dlogits)
    h = model.stream_spec.out_dim
    dleft, _ = nnet.net_backward(model.stream_spec, model.left, lcache, dmixed[:, :h])
    dright, _ = nnet.net_backward(model.stream_spec, model.right, rcache, dmixed[:, h:])
    return dleft, dright, dhead


def fast_forward(model, feats):
    """Per-frame BIO logits at full temporal resolution: (T, 3)."""
    logits, _ = _forward_cached(model, feats)
    return logits


# ---------------------------------------------------------------------------
# BIO decoding and the keyframe selection policy


def repair_labels(labels):
    """Grammar repair: an I whose predecessor is O (or sequence start) becomes B."""
    labels = np.asarray(labels, dtype=np.int64).copy()
    for f in range(len(labels)):
        if labels[f] == I and (f == 0 or labels[f - 1] == O):
            labels[f] = B
    return labels


def segments_from_labels(labels):
    """Maximal runs starting at B (after grammar repair)."""
    labels = repair_labels(labels)
    segments = []
    f = 0
    t = len(labels)
    while f < t:
        if labels[f] == B:
            e = f
            while e + 1 < t and labels[e + 1] == I:
                e += 1
            segments.append(Segment(f, e))
            f = e + 1
        else:
            f += 1
    return segments


def bio_decode(probs):
    """Argmax per frame, grammar repair, then segment extraction.

    Raises NotNormalized unless every row sums to 1 within 1e-6.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != 3:
        raise ShapeMismatch(f"probs must be (T, 3), got {probs.shape}")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-6:
        raise NotNormalized("probability rows must sum to 1")
    labels = repair_labels(np.argmax(probs, axis=1))
    return labels, segments_from_labels(labels)


def select_keyframes(segments, t):
    """Anchor mask: onset, floor((start+end)/2), and end of each segment."""
    mask = np.zeros(t, dtype=bool)
    for seg in segments:
        mask[seg.start] = True
        mask[(seg.start + seg.end) // 2] = True
        mask[seg.end] = True
    return mask


# ---------------------------------------------------------------------------
# CTC over the two-symbol alphabet {blank=O, SIGN}

_NEG_INF = -np.inf


def ctc_loss(logits, target_len):
    """Negative log-likelihood of SIGN repeated target_len times.

    logits: (T, 2) with column 0 = blank, column 1 = SIGN. Returns
    (loss, dlogits) with the exact analytic gradient. The extended label
    sequence interleaves blanks; because every label is the same symbol,
    skip transitions never apply.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeMismatch(f"ctc logits must be (T, 2), got {logits.shape}")
    t = logits.shape[0]
    if target_len > 0 and t < 2 * target_len - 1:
        raise InfeasibleTarget(
            f"{target_len} signs need at least {2 * target_len - 1} frames, got {t}"
        )
    lp = nnet.log_softmax(logits, axis=1)
    ext = np.zeros(2 * target_len + 1, dtype=np.int64)
    ext[1::2] = 1
    m = len(ext)

    alpha = np.full((t, m), _NEG_INF)
    alpha[0, 0] = lp[0, ext[0]]
    if m > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for f in range(1, t):
        stay = alpha[f - 1]
        prev = np.concatenate([[_NEG_INF], alpha[f - 1, :-1]])
        alpha[f] = np.logaddexp(stay, prev) + lp[f, ext]

    final = alpha[t - 1, m - 1]
    if m > 1:
        final = np.logaddexp(final, alpha[t - 1, m - 2])
    loss = -final

    # beta excludes the emission at frame f so alpha+beta is the path mass
    beta = np.full((t, m), _NEG_INF)
    beta[t - 1, m - 1] = 0.0
    if m > 1:
        beta[t - 1, m - 2] = 0.0
    for f in range(t - 2, -1, -1):
        stay = beta[f + 1] + lp[f + 1, ext]
        nxt_emit = np.concatenate([lp[f + 1, ext][1:], [_NEG_INF]])
        nxt = np.concatenate([beta[f + 1, 1:], [_NEG_INF]]) + nxt_emit
        beta[f] = np.logaddexp(stay, nxt)

    occupancy = np.exp(alpha + beta + loss)  # (T, M), rows sum to 1
    occ_class = np.zeros((t, 2))
    occ_class[:, 0] = occupancy[:, ext == 0].sum(axis=1)
    occ_class[:, 1] = occupancy[:, ext == 1].sum(axis=1)
    dlogits = np.exp(lp) - occ_class
    return float(loss), dlogits


# ---------------------------------------------------------------------------
# Training


def _collapse_logits(logits):
    """3-class BIO logits -> 2-class (blank=O, SIGN=B or I) logits.

    logsumexp over the I/B columns so softmax yields p(SIGN) = p(I) + p(B).
    """
    blank = logits[:, O]
    sign = np.logaddexp(logits[:, I], logits[:, B])
    return np.stack([blank, sign], axis=1)


def _uncollapse_grad(logits, dcollapsed):
    d = np.zeros_like(logits)
    d[:, O] = dcollapsed[:, 0]
    pair = nnet.softmax(np.stack([logits[:, I], logits[:, B]], axis=1), axis=1)
    d[:, I] = dcollapsed[:, 1] * pair[:, 0]
    d[:, B] = dcollapsed[:, 1] * pair[:, 1]
    return d


def _augment(rng, feats, labels):
    """Temporal augmentation: random crop (>= 32 frames) then frame drops (p=0.05)."""
    t = len(labels)
    left, right = feats
    if t > CROP_MIN:
        n = int(rng.integers(CROP_MIN, t, endpoint=True))
        start = int(rng.integers(0, t - n, endpoint=True))
        left, right = left[start : start + n], right[start : start + n]
        labels = labels[start : start + n]
    keep = rng.random(len(labels)) >= FRAME_DROP_P
    if keep.sum() >= 2:
        left, right, labels = left[keep], right[keep], labels[keep]
    return (left, right), labels


def train_fast(model, corpus, epochs=40, lr=3e-3, seed=0):
    """Cross-entropy + CTC training with temporal augmentation.

    Loss per item: mean CE(logits, bio) + 0.1 * CTC(collapsed logits,
    number of segments). Deterministic in seed. Returns (model, loss curve).
    """
    if not corpus.items:
        raise EmptyCorpus("cannot train on an empty corpus")
    rng = np.random.default_rng(seed)
    states = {
        "left": nnet.AdamState.for_params(model.left, lr),
        "right": nnet.AdamState.for_params(model.right, lr),
        "head": nnet.AdamState.for_params(model.head, lr),
    }
    data = []
    for item in corpus.items:
        f = HandFeatures.from_frames(item.seq.frames)
        data.append((f.left, f.right, np.asarray(item.sidecar.bio)))

    curve = []
    for _ in range(epochs):
        order = rng.permutation(len(data))
        epoch_loss = 0.0
        for idx in order:
            left, right, labels = data[idx]
            (left_a, right_a), labels_a = _augment(rng, (left, right), labels)
            feats = HandFeatures(left_a, right_a)
            logits, caches = _forward_cached(model, feats)
            t = logits.shape[0]

            p = nnet.softmax(logits, axis=1)
            ce = -float(np.mean(nnet.log_softmax(logits, axis=1)[np.arange(t), labels_a]))
            dlogits = p.copy()
            dlogits[np.arange(t), labels_a] -= 1.0
            dlogits /= t

            n_segments = len(segments_from_labels(labels_a))
            total = ce
            if t >= max(2 * n_segments - 1, 1):
                closs, dcol = ctc_loss(_collapse_logits(logits), n_segments)
                dlogits += CTC_WEIGHT * _uncollapse_grad(logits, dcol)
                total += CTC_WEIGHT * closs

            dleft, dright, dhead = _backward(model, caches, dlogits)
            nnet.adam_step(model.left, dleft, states["left"])
            nnet.adam_step(model.right, dright, states["right"])
            nnet.adam_step(model.head, dhead, states["head"])
            epoch_loss += total
        curve.append(epoch_loss / len(data))
    return model, np.array(curve)


def predict_labels(model, frames):
    """Frames (T, 246) -> (labels, segments) via the trained model."""
    logits = fast_forward(model, HandFeatures.from_frames(frames))
    return bio_decode(nnet.softmax(logits, axis=1))


# ---------------------------------------------------------------------------
# Metrics


def seg_metrics(pred_labels, gt_labels):
    """Frame F1 (macro over O/I/B), inside-frame IoU, and segment ratio.

    A class absent from both labelings contributes F1 = 1 (vacuous
    agreement). SR is 1 when both labelings have zero segments and +inf
    when only the ground truth does.
    """
    pred = np.asarray(pred_labels, dtype=np.int64)
    gt = np.asarray(gt_labels, dtype=np.int64)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"label lengths differ: {pred.shape} vs {gt.shape}")

    f1s = []
    for c in (O, I, B):
        tp = int(np.sum((pred == c) & (gt == c)))
        fp = int(np.sum((pred == c) & (gt != c)))
        fn = int(np.sum((pred != c) & (gt == c)))
        f1s.append(1.0 if tp + fp + fn == 0 else 2.0 * tp / (2.0 * tp + fp + fn))
    f1 = float(np.mean(f1s))

    pred_in = pred != O
    gt_in = gt != O
    union = int(np.sum(pred_in | gt_in))
    iou = 1.0 if union == 0 else float(np.sum(pred_in & gt_in)) / union

    n_pred = len(segments_from_labels(pred))
    n_gt = len(segments_from_labels(gt))
    if n_gt == 0:
        sr = 1.0 if n_pred == 0 else float("inf")
    else:
        sr = n_pred / n_gt
    return {"f1": f1, "iou": iou, "sr": sr}


# ---------------------------------------------------------------------------
# Checkpoint directory


def save_fast_model(model, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nnet.save_params(model.left, out / "left.spkw")
    nnet.save_params(model.right, out / "right.spkw")
    nnet.save_params(model.head, out / "head.spkw")
    hidden = model.stream_spec.out_dim
    mixer = model.head_spec.layers[0].dout
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump({"v": 1, "kind": "fast", "hidden": hidden, "mixer": mixer}, fh)


def load_fast_model(model_dir):
    root = Path(model_dir)
    with open(root / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("v") != 1 or manifest.get("kind") != "fast":
        raise SchemaError("not a segmentation model directory")
    model = build_fast_model(np.random.default_rng(0), manifest["hidden"], manifest["mixer"])
    model.left = nnet.load_params(model.stream_spec, root / "left.spkw")
    model.right = nnet.load_params(model.stream_spec, root / "right.spkw")
    model.head = nnet.load_params(model.head_spec, root / "head.spkw")
    return model
