"""The keyframe-conditioned flow matching core.

Training builds a linear probability path x_t = t*x1 + (1-t)*x0 from
Gaussian noise to data, freezes the ground-truth pose at keyframe rows of
the control signal, and regresses the residual field u = x1 - C with an
additional one-step-Euler reconstruction loss and a velocity (inter-frame
displacement) loss, combined 2:1:1 by default. Guidance inputs (keyframe
control and text) are dropped jointly with probability rho so inference
can blend conditional and unconditional fields (classifier-free guidance).

Sampling integrates the field with a few Euler steps from t=0 noise and
re-imposes the anchor rows after every step, which makes the keyframe-hit
guarantee exact. The body (66) and hand (180) channels run through
separate networks that share the text embedding table.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nnet
from .errors import (
    AnchorMissing,
    ConfigInvalid,
    EmptyBatch,
    EmptyCorpus,
    SchemaError,
    ShapeMismatch,
    StepsInvalid,
    TooShort,
)
from .motiondata import MotionSequence
from .nnet import Dense, NetSpec, SelfAttention, TemporalConv
from .skeleton import POSE_DIM

T_EMB_WIDTH = 32


@dataclass(frozen=True)
class Channel:
    name: str
    sl: slice

    @property
    def dim(self):
        return self.sl.stop - self.sl.start


BODY_CHANNEL = Channel("body", slice(0, 66))
HANDS_CHANNEL = Channel("hands", slice(66, 246))
CHANNELS = (BODY_CHANNEL, HANDS_CHANNEL)


@dataclass
class FlowConfig:
    lambda_cfm: float = 2.0
    lambda_recon: float = 1.0
    lambda_vel: float = 1.0
    rho: float = 0.1
    gamma: float = 2.0
    steps: int = 10
    anchor_padding: int = 8
    joint_guidance_drop: bool = True  # False: drop keyframes and text independently

    def validate(self):
        if min(self.lambda_cfm, self.lambda_recon, self.lambda_vel) < 0:
            raise ConfigInvalid("loss weights must be >= 0")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigInvalid("rho must lie in [0, 1]")
        if self.steps < 1:
            raise ConfigInvalid("steps must be >= 1")

    def to_json_dict(self):
        return {
            "lambda_cfm": self.lambda_cfm,
            "lambda_recon": self.lambda_recon,
            "lambda_vel": self.lambda_vel,
            "rho": self.rho,
            "gamma": self.gamma,
            "steps": self.steps,
            "anchor_padding": self.anchor_padding,
            "joint_guidance_drop": self.joint_guidance_drop,
        }

    @classmethod
    def from_json_dict(cls, d):
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class TextCondition:
    gloss_tokens: list
    lang_token: int = 0


@dataclass
class ControlSignal:
    c: np.ndarray  # (T, d)
    mask: np.ndarray  # (T,) bool
    t: float


# ---------------------------------------------------------------------------
# Path / control / losses (plain array math; exact gradients returned)


def _check_same_shape(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"mismatched shapes: {sorted(shapes)}")


def make_path(x1, x0, t):
    """Linear probability path point x_t = t*x1 + (1-t)*x0."""
    x1 = np.asarray(x1, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    _check_same_shape(x1, x0)
    return t * x1 + (1.0 - t) * x0


def make_control(x1, x_t, mask, t=0.0):
    """Keyframe rows keep ground truth, the rest carry the path point."""
    x1 = np.asarray(x1, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_same_shape(x1, x_t)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (x1.shape[0],):
        raise ShapeMismatch(f"mask must be ({x1.shape[0]},), got {mask.shape}")
    m = mask[:, None]
    return ControlSignal(c=np.where(m, x1, x_t), mask=mask, t=t)


def _control_array(c):
    return c.c if isinstance(c, ControlSignal) else np.asarray(c, dtype=np.float64)


def target_field(x1, c):
    """Residual direction from the control signal to the data: u = x1 - C."""
    return np.asarray(x1, dtype=np.float64) - _control_array(c)


def loss_cfm(v_pred, x1, c):
    """Mean squared error against the residual field; returns (loss, dv)."""
    u = target_field(x1, c)
    diff = np.asarray(v_pred, dtype=np.float64) - u
    n = diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / n


def loss_recon(v_pred, x_t, x1, t):
    """One-step-Euler reconstruction: x1_est = x_t + (1-t)*v."""
    v_pred = np.asarray(v_pred, dtype=np.float64)
    est = np.asarray(x_t, dtype=np.float64) + (1.0 - t) * v_pred
    diff = est - np.asarray(x1, dtype=np.float64)
    n = diff.size
    return float(np.mean(diff * diff)), 2.0 * diff * (1.0 - t) / n


def loss_vel(v_pred, x_t, x1, t):
    """Matches predicted inter-frame displacements to the ground truth's."""
    v_pred = np.asarray(v_pred, dtype=np.float64)
    if v_pred.shape[0] < 2:
        raise TooShort("velocity loss needs at least 2 frames")
    x1 = np.asarray(x1, dtype=np.float64)
    est = np.asarray(x_t, dtype=np.float64) + (1.0 - t) * v_pred
    diff = (est[1:] - est[:-1]) - (x1[1:] - x1[:-1])
    n = diff.size
    dest = np.zeros_like(est)
    dest[1:] += 2.0 * diff / n
    dest[:-1] -= 2.0 * diff / n
    return float(np.mean(diff * diff)), dest * (1.0 - t)


def loss_total(l_cfm, l_recon, l_vel, cfg=None):
    cfg = cfg or FlowConfig()
    return cfg.lambda_cfm * l_cfm + cfg.lambda_recon * l_recon + cfg.lambda_vel * l_vel


def cfg_field(v_cond, v_uncond, gamma):
    """Classifier-free guidance blend: v_uncond + gamma*(v_cond - v_uncond)."""
    v_cond = np.asarray(v_cond, dtype=np.float64)
    v_uncond = np.asarray(v_uncond, dtype=np.float64)
    _check_same_shape(v_cond, v_uncond)
    return v_uncond + gamma * (v_cond - v_uncond)


# ---------------------------------------------------------------------------
# Model


def timestep_embedding(t, width=T_EMB_WIDTH):
    """Sinusoidal embedding of t in [0, 1], frequencies 1..30 rad (geometric)."""
    half = width // 2
    freqs = np.exp(np.log(30.0) * np.arange(half) / (half - 1))
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


@dataclass
class TextEmbedding:
    """Learned token table: row 0 is the null condition, then language
    tokens, then gloss tokens. A condition embeds as the mean of its
    language row and gloss rows; the null condition is row 0 alone."""

    table: np.ndarray  # (1 + num_languages + vocab, width)
    num_languages: int
    vocab: int

    @property
    def width(self):
        return self.table.shape[1]

    def rows(self, text):
        if text is None:
            return [0]
        if not 0 <= text.lang_token < self.num_languages:
            raise ConfigInvalid(f"lang token {text.lang_token} outside 0..{self.num_languages - 1}")
        rows = [1 + text.lang_token]
        for g in text.gloss_tokens:
            if not 0 <= g < self.vocab:
                raise ConfigInvalid(f"gloss token {g} outside 0..{self.vocab - 1}")
            rows.append(1 + self.num_languages + g)
        return rows

    def embed(self, text):
        return self.table[self.rows(text)].mean(axis=0)

    def descr(self):
        return f"TextEmbedding({self.table.shape[0]},{self.width})"


@dataclass
class FlowModel:
    specs: dict  # channel name -> NetSpec
    params: dict  # channel name -> NetParams
    text_emb: TextEmbedding
    hidden: int
    depth: int

    def channel_input_dim(self, ch):
        return ch.dim + T_EMB_WIDTH + self.text_emb.width


def _channel_spec(ch, hidden, emb_width, depth):
    """Flat temporal stack: GELU convs (receptive field must span the
    largest anchor gap), a linear conv, single-head attention, dense head.
    The hand channel is twice as wide as the body channel so a full pose
    row can be carried losslessly through the hidden state."""
    h = hidden if ch.name == "body" else 2 * hidden
    din = ch.dim + T_EMB_WIDTH + emb_width
    layers = [TemporalConv(din, h, activation="gelu")]
    for _ in range(max(depth - 2, 0)):
        layers.append(TemporalConv(h, h, activation="gelu"))
    layers.append(TemporalConv(h, h))
    layers.append(SelfAttention(h))
    layers.append(Dense(h, ch.dim))
    return NetSpec(tuple(layers))


def build_flow_model(rng, num_languages, vocab, hidden=128, emb_width=64, depth=6):
    rows = 1 + num_languages + vocab
    lim = np.sqrt(6.0 / (rows + emb_width))
    text_emb = TextEmbedding(
        table=rng.uniform(-lim, lim, (rows, emb_width)), num_languages=num_languages, vocab=vocab
    )
    specs, params = {}, {}
    for ch in CHANNELS:
        specs[ch.name] = _channel_spec(ch, hidden, emb_width, depth)
        params[ch.name] = nnet.init_params(specs[ch.name], rng)
    return FlowModel(specs=specs, params=params, text_emb=text_emb, hidden=hidden, depth=depth)


def _channel_forward(model, ch, control_rows, t, z):
    # f(t, C, z) = g(t, C, z) - C: the fixed input skip spares the stack
    # from reproducing (to negate) its own noisy input rows
    t_rows = np.tile(timestep_embedding(t), (control_rows.shape[0], 1))
    z_rows = np.tile(z, (control_rows.shape[0], 1))
    inp = np.concatenate([control_rows, t_rows, z_rows], axis=1)
    g, caches = nnet.net_forward(model.specs[ch.name], model.params[ch.name], inp)
    return g - control_rows, caches


def flow_field(model, control, t, text):
    """Predicted field v = f(t, C, z) over all channels: (T, 246)."""
    c = _control_array(control)
    z = model.text_emb.embed(text)
    v = np.empty_like(c)
    for ch in CHANNELS:
        v[:, ch.sl] = _channel_forward(model, ch, c[:, ch.sl], t, z)[0]
    return v


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainState:
    net_states: dict
    emb_state: nnet.AdamState

    @classmethod
    def create(cls, model, lr):
        return cls(
            net_states={
                name: nnet.AdamState.for_params(p, lr) for name, p in model.params.items()
            },
            emb_state=nnet.AdamState(
                m=np.zeros(model.text_emb.table.size),
                v=np.zeros(model.text_emb.table.size),
                lr=lr,
            ),
        )


def _adam_table(table, grads, state):
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads.ravel()
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads.ravel() ** 2
    mhat = state.m / (1 - state.beta1 ** state.step)
    vhat = state.v / (1 - state.beta2 ** state.step)
    table -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).reshape(table.shape)


def train_step(model, batch, cfg, rng, state):
    """One Adam update on a batch of (x1, mask, text) items.

    Per item: t ~ U(0,1), x0 ~ N(0,I); with probability rho the guidance
    bundle is dropped (mask -> all false and text -> null jointly, or each
    independently when cfg.joint_guidance_drop is off). Returns averaged
    loss components.
    """
    if not batch:
        raise EmptyBatch("train_step needs at least one item")
    cfg.validate()
    grads = {name: np.zeros_like(p.flat) for name, p in model.params.items()}
    emb_grad = np.zeros_like(model.text_emb.table)
    totals = {"cfm": 0.0, "recon": 0.0, "vel": 0.0, "total": 0.0}
    dropped = 0

    for x1, mask, text in batch:
        x1 = np.asarray(x1, dtype=np.float64)
        t = float(rng.uniform())
        x0 = rng.standard_normal(x1.shape)
        if cfg.joint_guidance_drop:
            drop_mask = drop_text = rng.random() < cfg.rho
        else:
            drop_mask = rng.random() < cfg.rho
            drop_text = rng.random() < cfg.rho
        eff_mask = np.zeros(len(mask), dtype=bool) if drop_mask else np.asarray(mask, bool)
        eff_text = None if drop_text else text
        dropped += int(drop_mask)

        x_t = make_path(x1, x0, t)
        control = make_control(x1, x_t, eff_mask, t)
        z = model.text_emb.embed(eff_text)
        z_rows = model.text_emb.rows(eff_text)

        item = {"cfm": 0.0, "recon": 0.0, "vel": 0.0}
        for ch in CHANNELS:
            c_ch = control.c[:, ch.sl]
            x1_ch = x1[:, ch.sl]
            xt_ch = x_t[:, ch.sl]
            v, caches = _channel_forward(model, ch, c_ch, t, z)
            l1, d1 = loss_cfm(v, x1_ch, c_ch)
            l2, d2 = loss_recon(v, xt_ch, x1_ch, t)
            l3, d3 = loss_vel(v, xt_ch, x1_ch, t)
            dv = cfg.lambda_cfm * d1 + cfg.lambda_recon * d2 + cfg.lambda_vel * d3
            dflat, dinp = nnet.net_backward(model.specs[ch.name], model.params[ch.name], caches, dv)
            grads[ch.name] += dflat
            dz = dinp[:, ch.dim + T_EMB_WIDTH :].sum(axis=0)
            emb_grad[z_rows] += dz / len(z_rows)
            item["cfm"] += l1
            item["recon"] += l2
            item["vel"] += l3
        for k in item:
            totals[k] += item[k]
        totals["total"] += loss_total(item["cfm"], item["recon"], item["vel"], cfg)

    n = len(batch)
    for name in grads:
        nnet.adam_step(model.params[name], grads[name] / n, state.net_states[name])
    _adam_table(model.text_emb.table, emb_grad / n, state.emb_state)
    out = {k: v / n for k, v in totals.items()}
    out["dropped"] = dropped
    return out


def random_budget_mask(rng, t, count):
    """Random keyframe mask with a fixed anchor budget."""
    count = min(count, t)
    mask = np.zeros(t, dtype=bool)
    mask[rng.choice(t, size=count, replace=False)] = True
    return mask


def train_cfm(model, corpus, cfg=None, epochs=40, lr=2e-3, seed=0, batch_size=8,
              policy="segments", lr_final=None, state=None):
    """Train on a synthetic corpus; returns the per-epoch mean total loss.

    policy "segments" conditions on the corpus anchor masks (onset, mid,
    offset); "random" re-draws an equal-budget random mask every time an
    item is visited. lr decays linearly to lr_final (default lr/10) over
    the epochs; pass an existing TrainState to continue a run.
    """
    if not corpus.items:
        raise EmptyCorpus("cannot train on an empty corpus")
    cfg = cfg or FlowConfig()
    cfg.validate()
    if policy not in ("segments", "random"):
        raise ConfigInvalid(f"unknown keyframe policy {policy!r}")
    lr_final = lr / 10.0 if lr_final is None else lr_final
    rng = np.random.default_rng(seed)
    if state is None:
        state = TrainState.create(model, lr)

    data = []
    for item in corpus.items:
        text = TextCondition(list(item.sidecar.gloss_tokens), int(item.sidecar.lang_token))
        data.append((item.seq.frames.astype(np.float64), np.asarray(item.sidecar.mask, bool), text))

    curve = []
    for epoch in range(epochs):
        frac = epoch / max(epochs - 1, 1)
        epoch_lr = lr + (lr_final - lr) * frac
        for s in list(state.net_states.values()) + [state.emb_state]:
            s.lr = epoch_lr
        order = rng.permutation(len(data))
        epoch_total = 0.0
        n_batches = 0
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            batch = []
            for idx in chunk:
                x1, mask, text = data[idx]
                if policy == "random":
                    mask = random_budget_mask(rng, len(mask), int(mask.sum()))
                batch.append((x1, mask, text))
            losses = train_step(model, batch, cfg, rng, state)
            epoch_total += losses["total"]
            n_batches += 1
        curve.append(epoch_total / n_batches)
    return model, np.array(curve)


# ---------------------------------------------------------------------------
# Sampling


def dilate_mask(mask, anchors, pad):
    """Widen each anchor by +-pad frames, filling with the nearest anchor pose."""
    mask = np.asarray(mask, dtype=bool)
    anchors = np.asarray(anchors)
    idx = np.nonzero(mask)[0]
    if pad <= 0 or len(idx) == 0:
        return mask, anchors
    t = len(mask)
    out_mask = np.zeros(t, dtype=bool)
    out_anchors = anchors.copy()
    for f in range(t):
        near = idx[np.argmin(np.abs(idx - f))]
        if abs(int(near) - f) <= pad:
            out_mask[f] = True
            out_anchors[f] = anchors[near]
    return out_mask, out_anchors


def sample(model, mask, anchors, text=None, cfg=None, steps=None, gamma=None,
           seed=0, noise=None, pad=0, fps=25.0):
    """Euler-integrate the guided field from noise, clamping anchor rows.

    mask: (T,) booleans; anchors: (T, 246) poses read at mask-true rows
    (may be None when the mask is empty); text: TextCondition or None.
    With an all-false mask and text given this is gloss-free text-to-pose;
    with anchors it is keyframe-to-pose. The unconditional guidance branch
    feeds the current state as the control with the null text embedding,
    matching what the guidance-dropped branch saw in training. gamma=1
    (or a fully unconditioned call) uses a single conditional evaluation.
    """
    cfg = cfg or FlowConfig()
    steps = cfg.steps if steps is None else steps
    gamma = cfg.gamma if gamma is None else gamma
    if steps < 1:
        raise StepsInvalid(f"steps must be >= 1, got {steps}")
    mask = np.asarray(mask, dtype=bool)
    t_total = len(mask)
    if mask.any():
        if anchors is None:
            raise AnchorMissing("mask has anchors but no anchor poses were given")
        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.shape != (t_total, POSE_DIM):
            raise ShapeMismatch(f"anchors must be ({t_total}, {POSE_DIM}), got {anchors.shape}")
        if not np.all(np.isfinite(anchors[mask])):
            raise AnchorMissing("anchor poses must be finite at mask-true rows")
        if pad:
            mask, anchors = dilate_mask(mask, anchors, pad)

    if noise is None:
        noise = np.random.default_rng(seed).standard_normal((t_total, POSE_DIM))
    x = np.asarray(noise, dtype=np.float64).copy()
    if mask.any():
        x[mask] = anchors[mask]

    unconditioned = not mask.any() and text is None
    dt = 1.0 / steps
    for k in range(steps):
        t = k / steps
        c_cond = np.where(mask[:, None], anchors, x) if mask.any() else x
        if gamma == 1.0 or unconditioned:
            v = flow_field(model, c_cond, t, text)
        elif gamma == 0.0:
            v = flow_field(model, x, t, None)
        else:
            v_cond = flow_field(model, c_cond, t, text)
            v_uncond = flow_field(model, x, t, None)
            v = cfg_field(v_cond, v_uncond, gamma)
        x = x + dt * v
        if mask.any():
            x[mask] = anchors[mask]
    return MotionSequence(x.astype(np.float32), fps)


# ---------------------------------------------------------------------------
# Checkpoint directory


def save_flow_model(model, out_dir, cfg=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ch in CHANNELS:
        nnet.save_params(model.params[ch.name], out / f"{ch.name}.spkw")
    nnet.save_vector(model.text_emb.table, model.text_emb.descr(), out / "text_embed.spkw")
    manifest = {
        "v": 1,
        "kind": "flow",
        "hidden": model.hidden,
        "depth": model.depth,
        "emb_width": model.text_emb.width,
        "num_languages": model.text_emb.num_languages,
        "vocab": model.text_emb.vocab,
        "config": (cfg or FlowConfig()).to_json_dict(),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_flow_model(model_dir):
    root = Path(model_dir)
    with open(root / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("v") != 1 or manifest.get("kind") != "flow":
        raise SchemaError("not a flow model directory")
    model = build_flow_model(
        np.random.default_rng(0),
        num_languages=manifest["num_languages"],
        vocab=manifest["vocab"],
        hidden=manifest["hidden"],
        emb_width=manifest["emb_width"],
        depth=manifest.get("depth", 6),
    )
    for ch in CHANNELS:
        model.params[ch.name] = nnet.load_params(model.specs[ch.name], root / f"{ch.name}.spkw")
    table = nnet.load_vector(
        model.text_emb.descr(), model.text_emb.table.size, root / "text_embed.spkw"
    )
    model.text_emb.table = table.reshape(model.text_emb.table.shape)
    cfg = FlowConfig.from_json_dict(manifest.get("config", {}))
    return model, cfg
