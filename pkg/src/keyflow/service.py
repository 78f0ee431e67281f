"""Local HTTP service for the keyframe editor: load a sequence, edit
anchors (move frames, replace joint rotations), regenerate in-betweens,
and export results.

Sessions live in memory with LRU eviction (cap 32). The server runs
forward kinematics and ships joint positions so the UI stays free of
rotation math. Mutation on a session is serialized by a per-session lock;
a second generate on the same session while one is in flight gets 409.
"""

import base64
import binascii
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import cfm, rotmath, segmentation, skeleton
from .errors import KeyflowError
from .motiondata import LabelSidecar, sprk_from_bytes, sprk_to_bytes

MAX_SESSIONS = 32


@dataclass
class SessionState:
    seq: object  # MotionSequence
    mask: np.ndarray  # (T,) bool
    anchors: np.ndarray  # (T, 246) float32; rows valid where mask is true
    text: object = None  # TextCondition or None
    generating: bool = False
    gens: dict = field(default_factory=dict)
    gen_counter: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionRequest(BaseModel):
    sprk_b64: str
    sidecar: dict | None = None
    mask: list[bool] | None = None


class AnchorMove(BaseModel):
    from_frame: int
    to_frame: int


class PoseEdit(BaseModel):
    frame: int
    joint_index: int
    rot6d: list[float]


class AnchorsRequest(BaseModel):
    moves: list[AnchorMove] = []
    pose_edits: list[PoseEdit] = []


class GenerateRequest(BaseModel):
    steps: int = 10
    gamma: float = 2.0
    use_text: bool = True
    seed: int = 0


def create_app(flow_model=None, flow_cfg=None, seg_model=None, skel=None):
    app = FastAPI(title="keyflow editor service")
    app.add_middleware(
        CORSMiddleware,
        allow_origin_regex=r"http://(localhost|127\.0\.0\.1)(:\d+)?",
        allow_methods=["*"],
        allow_headers=["*"],
    )
    skel = skel or skeleton.default_skeleton()
    sessions = OrderedDict()
    registry_lock = threading.Lock()
    app.state.sessions = sessions  # exposed for tests and diagnostics

    def get_session(sid):
        with registry_lock:
            if sid not in sessions:
                raise HTTPException(status_code=404, detail="unknown session")
            sessions.move_to_end(sid)
            return sessions[sid]

    def session_response(sid, state):
        return {
            "session_id": sid,
            "T": int(state.seq.num_frames),
            "fps": float(state.seq.fps),
            "mask": [bool(m) for m in state.mask],
            "anchor_frames": [int(f) for f in np.nonzero(state.mask)[0]],
        }

    @app.get("/health")
    def health():
        return {"ok": True}

    @app.get("/skeleton")
    def skeleton_doc():
        return skel.to_json_dict()

    @app.post("/session")
    def open_session(req: SessionRequest):
        try:
            raw = base64.b64decode(req.sprk_b64, validate=True)
            seq = sprk_from_bytes(raw)
        except (KeyflowError, binascii.Error, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"bad sprk payload: {exc}")

        text = None
        side = None
        if req.sidecar is not None:
            try:
                side = LabelSidecar(
                    bio=req.sidecar.get("bio", [0] * seq.num_frames),
                    mask=req.sidecar.get("mask", [False] * seq.num_frames),
                    gloss_tokens=req.sidecar.get("gloss", []),
                    lang_token=int(req.sidecar.get("lang", 0)),
                )
            except KeyflowError as exc:
                raise HTTPException(status_code=422, detail=f"bad sidecar: {exc}")
            if len(side.bio) != seq.num_frames:
                raise HTTPException(status_code=422, detail="sidecar length mismatch")
            text = cfm.TextCondition(list(side.gloss_tokens), side.lang_token)

        if req.mask is not None:
            if len(req.mask) != seq.num_frames:
                raise HTTPException(status_code=422, detail="mask length mismatch")
            mask = np.asarray(req.mask, dtype=bool)
        elif side is not None and side.mask.any():
            mask = side.mask.copy()
        elif seg_model is not None:
            _, segments = segmentation.predict_labels(seg_model, seq.frames)
            mask = segmentation.select_keyframes(segments, seq.num_frames)
        else:
            mask = np.zeros(seq.num_frames, dtype=bool)

        anchors = seq.frames.copy()
        sid = uuid.uuid4().hex[:12]
        with registry_lock:
            sessions[sid] = SessionState(seq=seq, mask=mask, anchors=anchors, text=text)
            while len(sessions) > MAX_SESSIONS:
                sessions.popitem(last=False)
        return session_response(sid, sessions[sid])

    @app.get("/session/{sid}/joints")
    def loaded_joints(sid: str):
        state = get_session(sid)
        joints = skeleton.fk_sequence(state.seq.frames, skel)
        return {"T": int(state.seq.num_frames), "fps": float(state.seq.fps),
                "joints": joints.tolist()}

    @app.post("/session/{sid}/anchors")
    def edit_anchors(sid: str, req: AnchorsRequest):
        state = get_session(sid)
        with state.lock:
            t_total = state.seq.num_frames
            mask = state.mask.copy()
            anchors = state.anchors.copy()

            moved = {}
            for mv in req.moves:
                if not (0 <= mv.from_frame < t_total and 0 <= mv.to_frame < t_total):
                    raise HTTPException(status_code=422, detail="move frame out of range")
                if not mask[mv.from_frame]:
                    raise HTTPException(status_code=422, detail=f"frame {mv.from_frame} is not an anchor")
                if mv.from_frame in moved:
                    raise HTTPException(status_code=422, detail="duplicate move source")
                moved[mv.from_frame] = mv.to_frame

            vacated = set(moved)
            targets = list(moved.values())
            if len(set(targets)) != len(targets):
                raise HTTPException(status_code=422, detail="overlapping move targets")
            for target in targets:
                if mask[target] and target not in vacated:
                    raise HTTPException(status_code=422, detail=f"frame {target} already has an anchor")

            # moving an anchor preserves its pose at the new frame
            poses = {src: state.anchors[src].copy() for src in moved}
            for src in moved:
                mask[src] = False
            for src, dst in moved.items():
                mask[dst] = True
                anchors[dst] = poses[src]

            for edit in req.pose_edits:
                if not 0 <= edit.frame < t_total:
                    raise HTTPException(status_code=422, detail="pose edit frame out of range")
                if not mask[edit.frame]:
                    raise HTTPException(status_code=422, detail="pose edits only apply to anchor frames")
                if not 0 <= edit.joint_index < skeleton.NUM_JOINTS:
                    raise HTTPException(status_code=422, detail="joint index out of range")
                if len(edit.rot6d) != 6:
                    raise HTTPException(status_code=422, detail="rot6d must have 6 components")
                try:
                    rotmath.rot6d_to_matrix(np.asarray(edit.rot6d, dtype=np.float64))
                except KeyflowError as exc:
                    raise HTTPException(status_code=422, detail=f"degenerate rotation: {exc}")
                anchors[edit.frame, 6 * edit.joint_index : 6 * edit.joint_index + 6] = edit.rot6d

            state.mask = mask
            state.anchors = anchors
        return session_response(sid, state)

    @app.post("/session/{sid}/generate")
    def generate(sid: str, req: GenerateRequest):
        if flow_model is None:
            raise HTTPException(status_code=503, detail="no generator model loaded")
        state = get_session(sid)
        with state.lock:
            if state.generating:
                raise HTTPException(status_code=409, detail="generation in progress for this session")
            state.generating = True
        try:
            text = state.text if req.use_text else None
            seq = cfm.sample(
                flow_model,
                state.mask,
                state.anchors.astype(np.float64),
                text=text,
                cfg=flow_cfg,
                steps=req.steps,
                gamma=req.gamma,
                seed=req.seed,
                fps=state.seq.fps,
            )
            joints = skeleton.fk_sequence(seq.frames, skel)
        except KeyflowError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        finally:
            with state.lock:
                state.generating = False
        with state.lock:
            state.gen_counter += 1
            gen_id = f"g{state.gen_counter}"
            state.gens[gen_id] = seq
        return {
            "gen_id": gen_id,
            "T": int(seq.num_frames),
            "fps": float(seq.fps),
            "joints": joints.tolist(),
        }

    @app.get("/session/{sid}/export/{gen_id}")
    def export(sid: str, gen_id: str):
        state = get_session(sid)
        with state.lock:
            if gen_id not in state.gens:
                raise HTTPException(status_code=404, detail="unknown generation id")
            data = sprk_to_bytes(state.gens[gen_id])
        return Response(content=data, media_type="application/octet-stream")

    return app
