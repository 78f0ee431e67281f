"""Motion sequences, the .sprk container, label sidecars, and the
procedural synthetic corpus.

.sprk binary layout (little-endian):
    magic "SPRK" (4 bytes), version u16 = 1, reserved u16 = 0,
    T u32, D u32 = 246, fps f32, then T*D f32 frames row-major.

Sidecar: UTF-8 JSON {"v": 1, "bio": [...], "mask": [...], "gloss": [...],
"lang": int}. A missing "lang" defaults to 0 with the warning flag set.

The generator builds sentences of lexicon "signs" separated by
coarticulation frames. Within a sign, frames slerp through the sign's
onset -> mid -> offset anchor poses with smoothstep easing; coarticulation
frames slerp linearly from one sign's offset to the next sign's onset.
Sign frames are labeled B (first) then I; coarticulations are O.
"""

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import rotmath, skeleton
from .errors import ConfigInvalid, FormatError, LengthMismatch, SchemaError

O, I, B = 0, 1, 2

SPRK_MAGIC = b"SPRK"
SPRK_VERSION = 1
SPRK_HEADER = struct.Struct("<4sHHIIf")

# RNG splitting: the per-item stream is PCG64(seed XOR item_index); the
# shared lexicon stream is PCG64(seed XOR LEXICON_SALT) so it never
# collides with an item stream.
LEXICON_SALT = 0x9E3779B97F4A7C15
_U64 = 0xFFFFFFFFFFFFFFFF

BODY_MAX_ANGLE = np.pi / 3  # 60 degrees
FINGER_MAX_ANGLE = np.pi / 2  # 90 degrees


@dataclass
class MotionSequence:
    """T pose frames in 6D-rotation channels plus a frame rate.

    Frames are float32 so that .sprk round trips are bit-exact.
    """

    frames: np.ndarray  # (T, 246) float32
    fps: float
    meta: str | None = None

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[1] != skeleton.POSE_DIM:
            raise FormatError(f"frames must be (T, {skeleton.POSE_DIM}), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise FormatError("sequence must have at least one frame")

    @property
    def num_frames(self):
        return self.frames.shape[0]


@dataclass
class LabelSidecar:
    bio: np.ndarray  # (T,) int in {0:O, 1:I, 2:B}
    mask: np.ndarray  # (T,) bool keyframe anchors
    gloss_tokens: list
    lang_token: int = 0
    lang_defaulted: bool = False

    def __post_init__(self):
        self.bio = np.asarray(self.bio, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.bio.shape != self.mask.shape:
            raise SchemaError("bio and mask must have equal length")
        if not np.all((self.bio >= 0) & (self.bio <= 2)):
            raise SchemaError("bio labels must be in {0,1,2}")
        prev = np.concatenate([[O], self.bio[:-1]])
        if np.any((self.bio == I) & (prev == O)):
            raise SchemaError("BIO grammar violated: I follows O without a B")


def validate_pair(seq, sidecar):
    """Raise LengthMismatch if a sidecar does not match its sequence length."""
    if len(sidecar.bio) != seq.num_frames:
        raise LengthMismatch(
            f"sidecar length {len(sidecar.bio)} != sequence length {seq.num_frames}"
        )


@dataclass
class SynthConfig:
    lexicon_size: int = 50
    signs_per_sentence: tuple = (3, 8)
    sign_len: tuple = (8, 20)
    coart_len: tuple = (3, 6)
    num_languages: int = 2
    seed: int = 0
    num_items: int = 160
    fps: float = 25.0

    def validate(self):
        ranges = {
            "signs_per_sentence": (self.signs_per_sentence, 1),
            "sign_len": (self.sign_len, 1),
            "coart_len": (self.coart_len, 0),
        }
        for name, (rng, lo_min) in ranges.items():
            if len(rng) != 2 or rng[0] > rng[1] or rng[0] < lo_min:
                raise ConfigInvalid(f"invalid range for {name}: {rng}")
        if self.lexicon_size < 1:
            raise ConfigInvalid("lexicon_size must be >= 1")
        if self.num_languages < 1:
            raise ConfigInvalid("num_languages must be >= 1")
        if self.num_items < 1:
            raise ConfigInvalid("num_items must be >= 1")
        if not self.fps > 0:
            raise ConfigInvalid("fps must be positive")

    def to_json_dict(self):
        return {
            "lexicon_size": self.lexicon_size,
            "signs_per_sentence": list(self.signs_per_sentence),
            "sign_len": list(self.sign_len),
            "coart_len": list(self.coart_len),
            "num_languages": self.num_languages,
            "seed": self.seed,
            "num_items": self.num_items,
            "fps": self.fps,
        }

    @classmethod
    def from_json_dict(cls, d):
        known = dict(d)
        cfg = cls(
            lexicon_size=int(known.pop("lexicon_size", 50)),
            signs_per_sentence=tuple(known.pop("signs_per_sentence", (3, 8))),
            sign_len=tuple(known.pop("sign_len", (8, 20))),
            coart_len=tuple(known.pop("coart_len", (3, 6))),
            num_languages=int(known.pop("num_languages", 2)),
            seed=int(known.pop("seed", 0)),
            num_items=int(known.pop("num_items", 160)),
            fps=float(known.pop("fps", 25.0)),
        )
        if known:
            raise ConfigInvalid(f"unknown config keys: {sorted(known)}")
        cfg.validate()
        return cfg


@dataclass
class CorpusItem:
    seq: MotionSequence
    sidecar: LabelSidecar
    gt_anchor_frames: list


@dataclass
class SyntheticCorpus:
    items: list
    config: SynthConfig = field(default_factory=SynthConfig)


def _item_rng(seed, index):
    return np.random.Generator(np.random.PCG64((seed ^ index) & _U64))


def _lexicon_rng(seed):
    return np.random.Generator(np.random.PCG64((seed ^ LEXICON_SALT) & _U64))


def _sample_anchor_pose(rng):
    """Random non-degenerate pose: per-joint axis-angle, body <= 60deg, fingers <= 90deg."""
    axes = rng.standard_normal((skeleton.NUM_JOINTS, 3))
    angles = np.concatenate([
        rng.uniform(0.0, BODY_MAX_ANGLE, skeleton.NUM_BODY_JOINTS),
        rng.uniform(0.0, FINGER_MAX_ANGLE, 2 * skeleton.NUM_HAND_JOINTS),
    ])
    m = rotmath.axis_angle_to_matrix(axes, angles)
    return rotmath.matrix_to_rot6d(m).reshape(skeleton.POSE_DIM).astype(np.float32)


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


def _slerp_pose_block(a, b, ts):
    """Interpolate flat poses a->b at parameters ts: returns (len(ts), 246)."""
    a6 = np.asarray(a, np.float64).reshape(skeleton.NUM_JOINTS, 6)
    b6 = np.asarray(b, np.float64).reshape(skeleton.NUM_JOINTS, 6)
    out = rotmath.slerp_rot6d(a6, b6, np.asarray(ts)[:, None])
    return out.reshape(len(ts), skeleton.POSE_DIM)


def synth_generate(cfg):
    """Generate a deterministic synthetic corpus with exact BIO/anchor ground truth."""
    cfg.validate()
    lex_rng = _lexicon_rng(cfg.seed)
    lexicons = np.empty(
        (cfg.num_languages, cfg.lexicon_size, 3, skeleton.POSE_DIM), dtype=np.float32
    )
    for lang in range(cfg.num_languages):
        for g in range(cfg.lexicon_size):
            for a in range(3):
                lexicons[lang, g, a] = _sample_anchor_pose(lex_rng)

    items = []
    for idx in range(cfg.num_items):
        rng = _item_rng(cfg.seed, idx)
        lang = int(rng.integers(0, cfg.num_languages))
        n_signs = int(rng.integers(cfg.signs_per_sentence[0], cfg.signs_per_sentence[1], endpoint=True))
        gloss = rng.integers(0, cfg.lexicon_size, n_signs)
        sign_lens = rng.integers(cfg.sign_len[0], cfg.sign_len[1], n_signs, endpoint=True)
        coart_lens = rng.integers(cfg.coart_len[0], cfg.coart_len[1], max(n_signs - 1, 0), endpoint=True)

        total = int(np.sum(sign_lens) + np.sum(coart_lens))
        frames = np.zeros((total, skeleton.POSE_DIM), dtype=np.float64)
        bio = np.full(total, O, dtype=np.int64)
        anchor_set = set()

        cursor = 0
        for k in range(n_signs):
            onset_p, mid_p, offset_p = lexicons[lang, gloss[k]].astype(np.float64)
            s = cursor
            e = s + int(sign_lens[k]) - 1
            m = (s + e) // 2
            bio[s] = B
            bio[s + 1 : e + 1] = I
            for lo, hi, pa, pb in ((s, m, onset_p, mid_p), (m, e, mid_p, offset_p)):
                inner = np.arange(lo + 1, hi)
                if inner.size:
                    u = (inner - lo) / (hi - lo)
                    frames[inner] = _slerp_pose_block(pa, pb, _smoothstep(u))
            # anchors carry the lexicon poses exactly; onset wins collisions
            frames[m] = mid_p
            frames[e] = offset_p
            frames[s] = onset_p
            anchor_set.update((s, m, e))
            cursor = e + 1
            if k < n_signs - 1:
                c = int(coart_lens[k])
                if c:
                    nxt = lexicons[lang, gloss[k + 1], 0].astype(np.float64)
                    ts = np.arange(1, c + 1) / (c + 1)
                    frames[cursor : cursor + c] = _slerp_pose_block(offset_p, nxt, ts)
                cursor += c
        assert cursor == total

        mask = np.zeros(total, dtype=bool)
        anchors = sorted(anchor_set)
        mask[anchors] = True
        seq = MotionSequence(frames.astype(np.float32), cfg.fps)
        side = LabelSidecar(bio=bio, mask=mask, gloss_tokens=[int(g) for g in gloss], lang_token=lang)
        items.append(CorpusItem(seq, side, anchors))
    return SyntheticCorpus(items, replace(cfg))


# ---------------------------------------------------------------------------
# File I/O


def sprk_to_bytes(seq):
    t, d = seq.frames.shape
    header = SPRK_HEADER.pack(SPRK_MAGIC, SPRK_VERSION, 0, t, d, np.float32(seq.fps))
    body = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    return header + body


def sprk_from_bytes(data):
    if len(data) < SPRK_HEADER.size:
        raise FormatError("truncated header")
    magic, version, _reserved, t, d, fps = SPRK_HEADER.unpack_from(data)
    if magic != SPRK_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != SPRK_VERSION:
        raise FormatError(f"unsupported version {version}")
    if d != skeleton.POSE_DIM:
        raise FormatError(f"unsupported pose dimension {d}")
    expected = SPRK_HEADER.size + t * d * 4
    if len(data) != expected:
        raise FormatError(f"payload length {len(data)} != expected {expected}")
    frames = np.frombuffer(data, dtype="<f4", offset=SPRK_HEADER.size).reshape(t, d)
    return MotionSequence(frames.copy(), float(fps))


def save_sprk(seq, path):
    with open(path, "wb") as fh:
        fh.write(sprk_to_bytes(seq))


def load_sprk(path):
    with open(path, "rb") as fh:
        return sprk_from_bytes(fh.read())


def save_sidecar(side, path):
    doc = {
        "v": 1,
        "bio": [int(x) for x in side.bio],
        "mask": [bool(x) for x in side.mask],
        "gloss": [int(x) for x in side.gloss_tokens],
        "lang": int(side.lang_token),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_sidecar(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"sidecar is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("v") != 1:
        raise SchemaError("sidecar missing schema version v=1")
    for key in ("bio", "mask", "gloss"):
        if key not in doc or not isinstance(doc[key], list):
            raise SchemaError(f"sidecar missing list field '{key}'")
    lang_defaulted = "lang" not in doc
    lang = 0 if lang_defaulted else int(doc["lang"])
    return LabelSidecar(
        bio=np.array(doc["bio"], dtype=np.int64),
        mask=np.array(doc["mask"], dtype=bool),
        gloss_tokens=[int(g) for g in doc["gloss"]],
        lang_token=lang,
        lang_defaulted=lang_defaulted,
    )


def save_corpus(corpus, out_dir):
    """Write a corpus directory: item_%04d.sprk + .labels.json + manifest.json."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, item in enumerate(corpus.items):
        sprk_name = f"item_{i:04d}.sprk"
        side_name = f"item_{i:04d}.labels.json"
        save_sprk(item.seq, out / sprk_name)
        save_sidecar(item.sidecar, out / side_name)
        entries.append({"sprk": sprk_name, "sidecar": side_name})
    manifest = {"v": 1, "config": corpus.config.to_json_dict(), "items": entries}
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_corpus(data_dir):
    from pathlib import Path

    root = Path(data_dir)
    with open(root / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("v") != 1:
        raise SchemaError("corpus manifest missing schema version v=1")
    cfg = SynthConfig.from_json_dict(manifest["config"])
    items = []
    for entry in manifest["items"]:
        seq = load_sprk(root / entry["sprk"])
        side = load_sidecar(root / entry["sidecar"])
        validate_pair(seq, side)
        anchors = [int(f) for f in np.nonzero(side.mask)[0]]
        items.append(CorpusItem(seq, side, anchors))
    return SyntheticCorpus(items, cfg)
