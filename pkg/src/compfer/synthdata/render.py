"""Procedural face renderer with separate identity and expression factors.

Faces are drawn at 4x supersampling and box-filtered down, which gives
anti-aliased edges. All colours stay inside [0.1, 0.9] so codec reconstruction
never clips.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from compfer.codec.frames import Frame
from compfer.errors import ConfigError

CLASSES = ("anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral")
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}

# per-class deformation at full intensity:
#   curve  mouth curvature (+ = corners up)       open   mouth opening
#   eye    eye opening change                     brow   brow raise
#   tilt   inner brow ends lowered (+) / raised   width  mouth width change
EXPRESSIONS = {
    "anger":     dict(curve=-0.2, open=0.0,  eye=-0.6, brow=-1.0, tilt=1.0,  width=-0.5),
    "disgust":   dict(curve=-0.8, open=0.15, eye=-0.4, brow=-0.4, tilt=0.2,  width=0.2),
    "fear":      dict(curve=-0.3, open=0.5,  eye=0.8,  brow=0.6,  tilt=-0.8, width=0.5),
    "happiness": dict(curve=1.0,  open=0.2,  eye=-0.3, brow=0.0,  tilt=0.0,  width=0.8),
    "sadness":   dict(curve=-1.0, open=0.0,  eye=-0.2, brow=0.5,  tilt=-1.0, width=-0.2),
    "surprise":  dict(curve=0.0,  open=1.0,  eye=1.0,  brow=1.0,  tilt=0.0,  width=-0.4),
    "neutral":   dict(curve=0.0,  open=0.0,  eye=0.0,  brow=0.0,  tilt=0.0,  width=0.0),
}

BACKGROUND = np.array([0.22, 0.22, 0.25])
FEATURE_DARK = np.array([0.12, 0.11, 0.12])
MOUTH_DARK = np.array([0.34, 0.12, 0.13])
SUPERSAMPLE = 4

IDENTITY_BOUNDS = {
    "face_width_ratio": (0.50, 0.62),
    "face_aspect": (1.15, 1.35),
    "eye_spacing_ratio": (0.26, 0.34),
    "eye_height_ratio": (0.36, 0.44),
    "skin_tone": (0.50, 0.85),
}


def class_id(label) -> int:
    if isinstance(label, (int, np.integer)):
        if not 0 <= int(label) < len(CLASSES):
            raise ValueError(f"class index {label} out of range")
        return int(label)
    try:
        return CLASS_INDEX[str(label).strip().lower()]
    except KeyError:
        raise ValueError(f"unknown expression class {label!r}") from None


@dataclass(frozen=True)
class IdentityParams:
    face_width_ratio: float
    face_aspect: float
    eye_spacing_ratio: float
    eye_height_ratio: float
    skin_tone: tuple[float, float, float]

    @classmethod
    def from_seed(cls, seed: int) -> "IdentityParams":
        rng = np.random.default_rng([0x1D, int(seed)])
        b = IDENTITY_BOUNDS

        def u(key):
            lo, hi = b[key]
            return float(rng.uniform(lo, hi))

        lo, hi = b["skin_tone"]
        tone = tuple(float(v) for v in rng.uniform(lo, hi, size=3))
        return cls(u("face_width_ratio"), u("face_aspect"), u("eye_spacing_ratio"),
                   u("eye_height_ratio"), tone)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FaceGeometry:
    """Landmark positions in output-pixel units (before jitter)."""

    cx: float
    cy: float
    half_w: float
    half_h: float
    eye_y: float
    eye_dx: float
    mouth_y: float
    unit: float

    @classmethod
    def of(cls, ident: IdentityParams, size: int) -> "FaceGeometry":
        u = size / 64.0
        a = ident.face_width_ratio * size / 2
        b = a * ident.face_aspect
        cx = cy = size / 2
        top = cy - b
        return cls(cx, cy, a, b, top + ident.eye_height_ratio * 2 * b,
                   ident.eye_spacing_ratio * 2 * a, cy + 0.5 * b, u)


def _window(y0, y1, x0, x1, n):
    """Supersampled index window covering [y0, y1] x [x0, x1] (pixel units)."""
    s = SUPERSAMPLE
    r0, r1 = max(int(np.floor(y0 * s)) - 1, 0), min(int(np.ceil(y1 * s)) + 1, n)
    c0, c1 = max(int(np.floor(x0 * s)) - 1, 0), min(int(np.ceil(x1 * s)) + 1, n)
    ys = ((np.arange(r0, r1) + 0.5) / s)[:, None]
    xs = ((np.arange(c0, c1) + 0.5) / s)[None, :]
    return (slice(r0, r1), slice(c0, c1)), ys, xs


def _segment_mask(ys, xs, p0, p1, half):
    (y0, x0), (y1, x1) = p0, p1
    vy, vx = y1 - y0, x1 - x0
    t = np.clip(((ys - y0) * vy + (xs - x0) * vx) / (vy * vy + vx * vx), 0.0, 1.0)
    return (ys - (y0 + t * vy)) ** 2 + (xs - (x0 + t * vx)) ** 2 <= half * half


def render_face(identity: IdentityParams, label, intensity: float, size: int = 64) -> Frame:
    """Render one face; ``intensity`` 0 is the class-independent neutral face."""
    if not 0.0 <= intensity <= 1.0:
        raise ConfigError(f"intensity must lie in [0, 1], got {intensity}")
    if size % 8:
        raise ConfigError("size must be a multiple of 8")
    ex = EXPRESSIONS[CLASSES[class_id(label)]]
    lam = float(intensity)
    g = FaceGeometry.of(identity, size)
    u = g.unit
    n = size * SUPERSAMPLE
    img = np.empty((n, n, 3))
    img[:] = BACKGROUND

    win, ys, xs = _window(g.cy - g.half_h, g.cy + g.half_h, g.cx - g.half_w, g.cx + g.half_w, n)
    face = ((xs - g.cx) / g.half_w) ** 2 + ((ys - g.cy) / g.half_h) ** 2 <= 1.0
    img[win][face] = np.asarray(identity.skin_tone)

    eye_hh = 2.0 * u * (1 + 0.55 * ex["eye"] * lam)
    eye_hw = 3.5 * u
    brow_y = g.eye_y - 7.0 * u - 2.0 * u * ex["brow"] * lam
    tilt = 1.2 * u * ex["tilt"] * lam
    for side in (-1, 1):
        ex_c = g.cx + side * g.eye_dx
        win, ys, xs = _window(g.eye_y - eye_hh, g.eye_y + eye_hh, ex_c - eye_hw, ex_c + eye_hw, n)
        eye = ((xs - ex_c) / eye_hw) ** 2 + ((ys - g.eye_y) / eye_hh) ** 2 <= 1.0
        img[win][eye] = FEATURE_DARK
        inner = (brow_y + tilt, ex_c - side * 4.5 * u)
        outer = (brow_y - tilt, ex_c + side * 4.5 * u)
        pad = 0.8 * u
        win, ys, xs = _window(min(inner[0], outer[0]) - pad, max(inner[0], outer[0]) + pad,
                              ex_c - 4.5 * u - pad, ex_c + 4.5 * u + pad, n)
        img[win][_segment_mask(ys, xs, inner, outer, pad)] = FEATURE_DARK

    mw = 7.0 * u * (1 + 0.2 * ex["width"] * lam)
    reach = 0.8 * u + 3.0 * u * (abs(ex["curve"]) + ex["open"]) * lam
    win, ys, xs = _window(g.mouth_y - reach - 1, g.mouth_y + reach + 1, g.cx - mw, g.cx + mw, n)
    xi = (xs - g.cx) / mw
    inside = np.abs(xi) <= 1.0
    centre = g.mouth_y - 3.0 * u * ex["curve"] * lam * (xi * xi - 0.5)
    thick = 0.8 * u + 3.0 * u * ex["open"] * lam * np.sqrt(np.clip(1 - xi * xi, 0, None))
    img[win][inside & (np.abs(ys - centre) <= thick)] = MOUTH_DARK

    ss = SUPERSAMPLE
    small = img.reshape(n, size, ss, 3).sum(axis=2).reshape(size, ss, size, 3).sum(axis=1)
    return Frame.from_float(small / (ss * ss))


def shift_frame(frame: Frame, dy: int, dx: int) -> Frame:
    """Integer translation; pixels entering from outside replicate the edge."""
    h, w = frame.height, frame.width
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return Frame(frame.levels[ys[:, None], xs[None, :]])


def intensity_curve(T: int, apex_policy: str = "last") -> tuple[np.ndarray, int]:
    """Per-frame expression intensity and the apex index."""
    if T < 2:
        raise ValueError(f"sequence length must be >= 2, got {T}")
    t = np.arange(T, dtype=np.float64)
    if apex_policy == "last":
        return t / (T - 1), T - 1
    if apex_policy == "middle":
        apex = T // 2
        lam = np.where(t <= apex, t / apex, 0.0)
        if T - 1 > apex:
            lam = np.where(t > apex, (T - 1 - t) / (T - 1 - apex), lam)
        return lam, apex
    raise ConfigError(f"unknown apex policy {apex_policy!r}")


def jitter_offsets(T: int, jitter_seed: int) -> np.ndarray:
    """(T, 2) integer translations in {-1, 0, 1}."""
    return np.random.default_rng([0x7A, int(jitter_seed)]).integers(-1, 2, size=(T, 2))


def generate_sequence(identity_seed: int, label, T: int = 16, apex_policy: str = "last",
                      jitter_seed: int = 0, size: int = 64) -> tuple[list[Frame], int]:
    lam, apex = intensity_curve(T, apex_policy)
    ident = IdentityParams.from_seed(identity_seed)
    jit = jitter_offsets(T, jitter_seed)
    frames = [shift_frame(render_face(ident, label, float(l), size), int(j[0]), int(j[1]))
              for l, j in zip(lam, jit)]
    return frames, apex
