"""Shared experiment machinery: corpus splits, keyframe-to-pose scoring,
and the ablation suites (loss configuration, keyframe policy, sampling
steps) reproduced at desk scale on the synthetic corpus."""

import os
from dataclasses import replace

import numpy as np

from . import cfm, metrics
from .baselines import slerp_inbetween
from .errors import ConfigInvalid
from .motiondata import SyntheticCorpus

HELD_OUT_ITEMS = 50


def thread_count():
    """Internal parallelism cap from KEYFLOW_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("KEYFLOW_THREADS", "1")))
    except ValueError:
        return 1


def split_corpus(corpus, held_out=HELD_OUT_ITEMS):
    """Deterministic split: last held_out items are the evaluation set."""
    held_out = min(held_out, max(len(corpus.items) - 1, 1))
    train = SyntheticCorpus(corpus.items[:-held_out], corpus.config)
    return train, corpus.items[-held_out:]


def item_condition(item):
    mask = np.asarray(item.sidecar.mask, dtype=bool)
    anchors = item.seq.frames.astype(np.float64)
    text = cfm.TextCondition(list(item.sidecar.gloss_tokens), int(item.sidecar.lang_token))
    return mask, anchors, text


def kf2p_scores(model, items, skel, steps=1, gamma=1.0, seed=7, use_text=True):
    """Mean held-out DTW-JPE of keyframe-conditioned generation."""
    body, hand = [], []
    for item in items:
        mask, anchors, text = item_condition(item)
        gen = cfm.sample(
            model, mask, anchors, text=text if use_text else None,
            steps=steps, gamma=gamma, seed=seed, fps=item.seq.fps,
        )
        d = metrics.dtw_jpe(gen, item.seq, skel)
        body.append(d["body"])
        hand.append(d["hand"])
    return {"body": float(np.mean(body)), "hand": float(np.mean(hand))}


def slerp_scores(items, skel):
    """Mean held-out DTW-JPE of the SLERP in-betweening baseline."""
    body, hand = [], []
    for item in items:
        mask = np.asarray(item.sidecar.mask, dtype=bool)
        base = slerp_inbetween(mask, item.seq.frames, fps=item.seq.fps)
        d = metrics.dtw_jpe(base, item.seq, skel)
        body.append(d["body"])
        hand.append(d["hand"])
    return {"body": float(np.mean(body)), "hand": float(np.mean(hand))}


def train_flow(corpus, cfg=None, epochs=80, lr=1.5e-3, lr_final=None, seed=0,
               hidden=128, depth=6, batch_size=8, policy="segments"):
    """Build and train a flow model sized from the corpus config."""
    c = corpus.config
    model = cfm.build_flow_model(
        np.random.default_rng(seed),
        num_languages=c.num_languages,
        vocab=c.lexicon_size,
        hidden=hidden,
        depth=depth,
    )
    model, curve = cfm.train_cfm(
        model, corpus, cfg=cfg, epochs=epochs, lr=lr, lr_final=lr_final,
        seed=seed, batch_size=batch_size, policy=policy,
    )
    return model, curve


# ---------------------------------------------------------------------------
# Ablation suites (Table-style reports at desk scale)

LOSS_CONFIGS = (
    ("cfm", (2.0, 0.0, 0.0)),
    ("recon", (0.0, 1.0, 0.0)),
    ("vel", (0.0, 0.0, 1.0)),
    ("cfm+recon", (2.0, 1.0, 0.0)),
    ("cfm+vel", (2.0, 0.0, 1.0)),
    ("cfm+recon+vel", (2.0, 1.0, 1.0)),
)


def suite_loss(corpus, skel, epochs=30, seed=0, hidden=64, depth=6, eval_steps=1):
    """Train one model per loss configuration; score held-out KF2P."""
    train, held = split_corpus(corpus)
    rows = []
    for name, (lc, lrn, lv) in LOSS_CONFIGS:
        cfg = cfm.FlowConfig(lambda_cfm=lc, lambda_recon=lrn, lambda_vel=lv)
        model, _ = train_flow(train, cfg=cfg, epochs=epochs, seed=seed, hidden=hidden, depth=depth)
        s = kf2p_scores(model, held, skel, steps=eval_steps)
        rows.append((name, s["body"], s["hand"]))
    return rows, ("loss_config", "dtw_jpe_body", "dtw_jpe_hand")


def suite_policy(corpus, skel, epochs=30, seed=0, hidden=64, depth=6, eval_steps=1):
    """Segment-policy anchors vs an equal-budget random policy."""
    train, held = split_corpus(corpus)
    rows = []
    for policy in ("segments", "random"):
        model, _ = train_flow(train, epochs=epochs, seed=seed, hidden=hidden,
                              depth=depth, policy=policy)
        s = kf2p_scores(model, held, skel, steps=eval_steps)
        rows.append((policy, s["body"], s["hand"]))
    return rows, ("policy", "dtw_jpe_body", "dtw_jpe_hand")


def suite_steps(corpus, skel, epochs=30, seed=0, hidden=64, depth=6,
                step_counts=(1, 2, 5, 10, 100)):
    """One default-loss model evaluated across sampling step counts."""
    train, held = split_corpus(corpus)
    model, _ = train_flow(train, epochs=epochs, seed=seed, hidden=hidden, depth=depth)
    rows = []
    for steps in step_counts:
        s = kf2p_scores(model, held, skel, steps=steps)
        rows.append((steps, s["body"], s["hand"]))
    return rows, ("steps", "dtw_jpe_body", "dtw_jpe_hand")


def run_suite(name, corpus, skel, **kw):
    if name == "loss":
        return suite_loss(corpus, skel, **kw)
    if name == "policy":
        return suite_policy(corpus, skel, **kw)
    if name == "steps":
        return suite_steps(corpus, skel, **kw)
    raise ConfigInvalid(f"unknown ablation suite {name!r}")
