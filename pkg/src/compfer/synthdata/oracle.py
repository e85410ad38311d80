"""Hand-written geometric classifier for apex frames.

Knows the identity's face layout, estimates the jitter translation, then
measures mouth curvature / opening / width, eye opening and brow position from
a darkness map. Classification is nearest prototype, where prototypes are the
same measurements taken on a fixed reference face. Nothing is learned from
the corpus.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from compfer.codec.frames import Frame
from compfer.synthdata.render import (
    CLASSES,
    FEATURE_DARK,
    FaceGeometry,
    IdentityParams,
    render_face,
    shift_frame,
)

FEATURES = ("curve", "open", "width", "eye", "brow", "tilt")
REFERENCE_SEED = 10_007


def _gray(frame: Frame) -> np.ndarray:
    return frame.data.mean(axis=2).astype(np.float64)


def _feature_boxes(g: FaceGeometry):
    u = g.unit
    boxes = []
    for side in (-1, 1):
        x = g.cx + side * g.eye_dx
        boxes.append((g.eye_y - 13 * u, g.eye_y + 4 * u, x - 6 * u, x + 6 * u))
    boxes.append((g.mouth_y - 7 * u, g.mouth_y + 7 * u, g.cx - 11 * u, g.cx + 11 * u))
    return boxes


def estimate_jitter(frame: Frame, identity: IdentityParams) -> tuple[int, int]:
    """Integer shift that best aligns the face outline with a neutral render."""
    size = frame.height
    g = FaceGeometry.of(identity, size)
    ref = render_face(identity, "neutral", 0.0, size)
    mask = np.ones((size, size), bool)
    ys = np.arange(size)[:, None] + 0.5
    xs = np.arange(size)[None, :] + 0.5
    for y0, y1, x0, x1 in _feature_boxes(g):
        mask &= ~((ys >= y0 - 1) & (ys <= y1 + 1) & (xs >= x0 - 1) & (xs <= x1 + 1))
    target = _gray(frame)
    best, arg = np.inf, (0, 0)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            cand = _gray(shift_frame(ref, dy, dx))
            sad = np.abs(cand - target)[mask].sum()
            if sad < best:
                best, arg = sad, (dy, dx)
    return arg


def measure(frame: Frame, identity: IdentityParams, jitter: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Raw geometric measurements (pixel units) of an unjittered-aligned face."""
    size = frame.height
    g = FaceGeometry.of(identity, size)
    u = g.unit
    frame = shift_frame(frame, -jitter[0], -jitter[1])
    gray = _gray(frame)
    skin = float(np.mean(identity.skin_tone))
    dark_level = float(np.mean(FEATURE_DARK))
    dark = np.clip((skin - gray) / (skin - dark_level), 0.0, 1.0)
    ys = np.arange(size)[:, None] + 0.5
    xs = np.arange(size)[None, :] + 0.5
    inface = ((xs - g.cx) / (g.half_w - 1)) ** 2 + ((ys - g.cy) / (g.half_h - 1)) ** 2 <= 1.0
    dark = dark * inface

    # mouth
    r0, r1 = int(g.mouth_y - 7 * u), int(np.ceil(g.mouth_y + 7 * u))
    c0, c1 = int(g.cx - 11 * u), int(np.ceil(g.cx + 11 * u))
    box = dark[r0:r1, c0:c1]
    rows = ys[r0:r1, 0]
    mass = box.sum(axis=0)
    cols = np.flatnonzero(mass > 0.5)
    width = float(cols.size)
    centroid = (box * rows[:, None]).sum(axis=0) / np.maximum(mass, 1e-9)
    colx = xs[0, c0:c1] - g.cx
    centre = np.abs(colx) <= 1.0
    half = max(width / 2, 1.0)
    corner = (np.abs(colx) >= 0.55 * half) & (np.abs(colx) <= 0.8 * half) & (mass > 0.5)
    curve = float(centroid[centre].mean() - centroid[corner].mean()) if corner.any() else 0.0
    opening = float(mass[centre].mean())

    # eyes and brows
    eye_mass, brow_y, tilt = 0.0, 0.0, 0.0
    for side in (-1, 1):
        x = g.cx + side * g.eye_dx
        e = dark[int(g.eye_y - 3.3 * u):int(np.ceil(g.eye_y + 3.6 * u)),
                 int(x - 4 * u):int(np.ceil(x + 4 * u))]
        eye_mass += e.sum() / 2
        b0, b1 = int(g.eye_y - 13 * u), int(g.eye_y - 3.3 * u)
        for part, sign in (("inner", -side), ("outer", side)):
            lo, hi = sorted((x, x + sign * 5.5 * u))
            bb = dark[b0:b1, int(lo):int(np.ceil(hi))]
            m = bb.sum()
            cy = (bb * ys[b0:b1, :1]).sum() / m if m > 1e-9 else g.eye_y - 7 * u
            if part == "inner":
                tilt += cy / 2
            else:
                tilt -= cy / 2
            brow_y += cy / 4
    brow = float(g.eye_y - brow_y)
    return np.array([curve, opening, width, eye_mass, brow, tilt])


@lru_cache(maxsize=8)
def _prototypes(size: int):
    ident = IdentityParams.from_seed(REFERENCE_SEED)
    neutral = measure(render_face(ident, "neutral", 0.0, size), ident)
    protos = np.stack([measure(render_face(ident, c, 1.0, size), ident) - neutral for c in CLASSES])
    spread = protos.std(axis=0)
    return protos, np.where(spread > 1e-9, spread, 1.0)


def oracle_features(frame: Frame, identity: IdentityParams) -> np.ndarray:
    """Measurements of ``frame`` relative to the identity's neutral face."""
    jit = estimate_jitter(frame, identity)
    neutral = measure(render_face(identity, "neutral", 0.0, frame.height), identity)
    return measure(frame, identity, jit) - neutral


def oracle_classify(frame: Frame, identity: IdentityParams) -> str:
    protos, spread = _prototypes(frame.height)
    f = oracle_features(frame, identity)
    d = (((protos - f) / spread) ** 2).sum(axis=1)
    return CLASSES[int(np.argmin(d))]


def mouth_curvature_sign(frame: Frame, identity: IdentityParams) -> int:
    """+1 when the mouth corners sit above its centre (smile), -1 when below."""
    curve = measure(frame, identity, estimate_jitter(frame, identity))[0]
    return int(np.sign(round(curve, 3)))
