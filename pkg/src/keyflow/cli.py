"""Command-line entry point.

Every failure exits with code 1 and a machine-readable JSON error on
stderr ({"error": <type>, "message": <detail>}); usage errors exit 2.
Report-producing commands (train curves, eval, ablate) write a CSV table
and a matplotlib figure next to their JSON output.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import cfm, experiments, metrics, motiondata, report, segmentation
from .baselines import slerp_inbetween
from .errors import KeyflowError
from .skeleton import default_skeleton

LANG_TOKENS = {"DGS": 0, "CSL": 1, "ASL": 2, "BSL": 3}


def parse_lang(value):
    if value is None:
        return 0
    if value.upper() in LANG_TOKENS:
        return LANG_TOKENS[value.upper()]
    return int(value)


def parse_gloss_tokens(text):
    tokens = []
    for tok in text.replace(",", " ").split():
        tokens.append(int(tok.lstrip("g")))
    return tokens


def load_mask_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("v") != 1 or "mask" not in doc:
        raise KeyflowError(f"{path} is not a v=1 mask document")
    return np.asarray(doc["mask"], dtype=bool)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args):
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = motiondata.SynthConfig.from_json_dict(json.load(fh))
    else:
        cfg = motiondata.SynthConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    corpus = motiondata.synth_generate(cfg)
    motiondata.save_corpus(corpus, args.out)
    frames = sum(i.seq.num_frames for i in corpus.items)
    anchors = sum(len(i.gt_anchor_frames) for i in corpus.items)
    print(json.dumps({
        "items": len(corpus.items),
        "frames": frames,
        "anchors": anchors,
        "languages": cfg.num_languages,
        "out": str(args.out),
    }))


def cmd_train_seg(args):
    corpus = motiondata.load_corpus(args.data)
    train, _ = experiments.split_corpus(corpus) if args.holdout else (corpus, [])
    model = segmentation.build_fast_model(np.random.default_rng(args.seed))
    model, curve = segmentation.train_fast(
        model, train, epochs=args.epochs, lr=args.lr, seed=args.seed
    )
    segmentation.save_fast_model(model, args.out)
    report.save_loss_curve(curve, args.out)
    print(json.dumps({"final_loss": float(curve[-1]), "epochs": args.epochs, "out": str(args.out)}))


def cmd_segment(args):
    model = segmentation.load_fast_model(args.model)
    seq = motiondata.load_sprk(args.infile)
    labels, segments = segmentation.predict_labels(model, seq.frames)
    doc = {
        "v": 1,
        "bio": [int(x) for x in labels],
        "segments": [[s.start, s.end] for s in segments],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    print(json.dumps({"frames": len(labels), "segments": len(segments), "out": str(args.out)}))


def cmd_keyframes(args):
    with open(args.labels, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("v") != 1 or "bio" not in doc:
        raise KeyflowError(f"{args.labels} is not a v=1 labels document")
    labels = np.asarray(doc["bio"], dtype=np.int64)
    segments = segmentation.segments_from_labels(labels)
    mask = segmentation.select_keyframes(segments, len(labels))
    out_doc = {
        "v": 1,
        "mask": [bool(m) for m in mask],
        "anchor_frames": [int(f) for f in np.nonzero(mask)[0]],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out_doc, fh)
    print(json.dumps({"anchors": int(mask.sum()), "out": str(args.out)}))


def cmd_train_cfm(args):
    corpus = motiondata.load_corpus(args.data)
    train, _ = experiments.split_corpus(corpus) if args.holdout else (corpus, [])
    lam = [float(x) for x in args.lam.split(",")]
    if len(lam) != 3:
        raise KeyflowError("--lambda needs three comma-separated weights")
    cfg = cfm.FlowConfig(
        lambda_cfm=lam[0], lambda_recon=lam[1], lambda_vel=lam[2],
        rho=args.rho, gamma=args.gamma, steps=args.steps, anchor_padding=args.pad,
    )
    model, curve = experiments.train_flow(
        train, cfg=cfg, epochs=args.epochs, lr=args.lr, seed=args.seed,
        hidden=args.hidden, depth=args.depth, batch_size=args.batch, policy=args.policy,
    )
    cfm.save_flow_model(model, args.out, cfg)
    report.save_loss_curve(curve, args.out)
    print(json.dumps({"final_loss": float(curve[-1]), "epochs": args.epochs, "out": str(args.out)}))


def cmd_sample(args):
    if args.mask:
        mask = load_mask_json(args.mask)
    elif args.length:
        mask = np.zeros(args.length, dtype=bool)
    else:
        raise KeyflowError("provide --mask or --length")

    anchors = None
    fps = 25.0
    if args.anchors:
        anchor_seq = motiondata.load_sprk(args.anchors)
        if anchor_seq.num_frames != len(mask):
            raise KeyflowError(
                f"anchors length {anchor_seq.num_frames} does not match mask length {len(mask)}"
            )
        anchors = anchor_seq.frames.astype(np.float64)
        fps = anchor_seq.fps

    if args.baseline == "slerp":
        seq = slerp_inbetween(mask, anchors, fps=fps)
    else:
        if not args.ckpt:
            raise KeyflowError("--ckpt is required unless --baseline slerp is used")
        model, cfg = cfm.load_flow_model(args.ckpt)
        text = None
        if args.text:
            text = cfm.TextCondition(parse_gloss_tokens(args.text), parse_lang(args.lang))
        seq = cfm.sample(
            model, mask, anchors, text=text, cfg=cfg,
            steps=args.steps, gamma=args.gamma, seed=args.seed, pad=args.pad, fps=fps,
        )
    motiondata.save_sprk(seq, args.out)
    print(json.dumps({"frames": seq.num_frames, "out": str(args.out)}))


def _sprk_pairs(pred, gt):
    pred, gt = Path(pred), Path(gt)
    if pred.is_dir() != gt.is_dir():
        raise KeyflowError("--pred and --gt must both be files or both directories")
    if not pred.is_dir():
        return [(pred, gt)]
    pairs = []
    for p in sorted(pred.glob("*.sprk")):
        q = gt / p.name
        if not q.exists():
            raise KeyflowError(f"missing ground-truth file {q}")
        pairs.append((p, q))
    if not pairs:
        raise KeyflowError(f"no .sprk files in {pred}")
    return pairs


def cmd_eval(args):
    skel = default_skeleton()
    pairs = _sprk_pairs(args.pred, args.gt)
    plain = {"body": [], "hand": []}
    aligned = {"body": [], "hand": []}
    for p, q in pairs:
        pred = motiondata.load_sprk(p)
        gt = motiondata.load_sprk(q)
        d = metrics.dtw_jpe(pred, gt, skel)
        a = metrics.dtw_pa_jpe(pred, gt, skel)
        for k in ("body", "hand"):
            plain[k].append(d[k])
            aligned[k].append(a[k])
    doc = {
        "v": 1,
        "dtw_jpe": {k: float(np.mean(v)) for k, v in plain.items()},
        "dtw_pa_jpe": {k: float(np.mean(v)) for k, v in aligned.items()},
        "n_items": len(pairs),
    }
    report.save_eval_report(doc, args.out)
    print(json.dumps(doc))


def cmd_ablate(args):
    corpus = motiondata.load_corpus(args.data)
    skel = default_skeleton()
    rows, header = experiments.run_suite(
        args.suite, corpus, skel, epochs=args.epochs, seed=args.seed, hidden=args.hidden
    )
    report.save_ablation_report(args.suite, rows, header, args.out)
    print(json.dumps({"suite": args.suite, "rows": rows, "out": str(args.out)}))


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    flow_model, flow_cfg = (None, None)
    if args.ckpt:
        flow_model, flow_cfg = cfm.load_flow_model(args.ckpt)
    seg_model = segmentation.load_fast_model(args.seg_model) if args.seg_model else None
    app = create_app(flow_model=flow_model, flow_cfg=flow_cfg, seg_model=seg_model)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="keyflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="SynthConfig JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-seg", help="train the BIO segmenter")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--holdout", action="store_true",
                   help="reserve the standard held-out tail during training")
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("segment", help="BIO-label a sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("keyframes", help="mine onset/mid/offset anchors from labels")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keyframes)

    p = sub.add_parser("train-cfm", help="train the flow-matching generator")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda", dest="lam", default="2,1,1")
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--pad", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--lr", type=float, default=1.5e-3)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--policy", choices=("segments", "random"), default="segments")
    p.add_argument("--holdout", action="store_true")
    p.set_defaults(func=cmd_train_cfm)

    p = sub.add_parser("sample", help="generate a sequence")
    p.add_argument("--ckpt")
    p.add_argument("--mask", help="mask JSON (v=1)")
    p.add_argument("--anchors", help="anchor poses as .sprk")
    p.add_argument("--length", type=int, help="sequence length when no mask is given")
    p.add_argument("--text", help="gloss tokens, e.g. 'g1 g2' or '1 2'")
    p.add_argument("--lang", help="language token (DGS/CSL/ASL/BSL or int)")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pad", type=int, default=0)
    p.add_argument("--baseline", choices=("slerp",))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="DTW joint-position error report")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="reproduce an ablation suite")
    p.add_argument("--suite", choices=("loss", "policy", "steps"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="run the editor HTTP service")
    p.add_argument("--ckpt")
    p.add_argument("--seg-model")
    p.add_argument("--port", type=int, default=8789)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except KeyflowError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "IoError", "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
