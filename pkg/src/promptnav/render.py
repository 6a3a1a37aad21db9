"""Synthetic 16x16 scene renders with a controlled two-style domain gap.

Each image composes a scene background (color + stripe motif) with small
object glyphs. The `web` and `indomain` styles differ only in a fixed,
documented parameter subset (palette transform, texture-noise level, glyph
layout jitter), so the gap is real but class identity survives it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

SCENE_CLASSES = ["bedroom", "kitchen", "bathroom", "office", "hallway", "lounge"]
OBJECT_CLASSES = ["chair", "table", "bed", "lamp", "sofa", "plant", "sink", "mirror"]
ALL_CLASSES = OBJECT_CLASSES + SCENE_CLASSES  # the pseudo-label candidate list

IMAGE_HW = 16

SCENE_COLORS = {
    "bedroom": (150, 90, 120),
    "kitchen": (200, 180, 90),
    "bathroom": (90, 170, 200),
    "office": (120, 120, 150),
    "hallway": (170, 140, 100),
    "lounge": (100, 170, 120),
}

OBJECT_COLORS = {
    "chair": (230, 40, 30),
    "table": (125, 75, 15),
    "bed": (245, 245, 245),
    "lamp": (255, 225, 40),
    "sofa": (90, 40, 200),
    "plant": (30, 210, 50),
    "sink": (40, 215, 220),
    "mirror": (225, 40, 180),
}

# 6x6 binary glyphs; silhouettes chosen for large pairwise Hamming distance
_G = {
    "chair": ["100000", "100000", "111110", "100010", "100010", "100010"],
    "table": ["111111", "000000", "010010", "010010", "010010", "010010"],
    "bed":   ["000000", "000000", "111111", "111111", "111111", "111111"],
    "lamp":  ["001100", "001100", "001100", "001100", "011110", "111111"],
    "sofa":  ["100001", "111111", "111111", "100001", "000000", "000000"],
    "plant": ["100101", "010110", "001100", "111111", "001100", "001100"],
    "sink":  ["011110", "110011", "100001", "100001", "110011", "011110"],
    "mirror": ["111111", "100001", "100001", "100001", "100001", "111111"],
}
GLYPHS = {name: np.array([[c == "1" for c in row] for row in rows])
          for name, rows in _G.items()}


@dataclass(frozen=True)
class RenderStyle:
    tag: str
    palette_scale: tuple[float, float, float]
    palette_shift: tuple[float, float, float]
    noise_sigma: float
    layout_jitter: int  # max +/- px offset applied to glyph anchors


STYLES = {
    "web": RenderStyle("web", (1.0, 1.0, 1.0), (0.0, 0.0, 0.0), 8.0, 0),
    "indomain": RenderStyle("indomain", (0.86, 0.93, 1.06), (-12.0, -6.0, 9.0), 15.0, 2),
}

# small-glyph anchor slots (corner-ish positions on the 16x16 canvas)
_SLOTS = [(1, 1), (1, 9), (9, 1), (9, 9)]


def _scene_motif_mask(scene: str) -> np.ndarray:
    """Per-scene geometric pattern; shape carries scene identity through
    palette shifts and normalization."""
    m = np.zeros((IMAGE_HW, IMAGE_HW), dtype=bool)
    ii, jj = np.mgrid[0:IMAGE_HW, 0:IMAGE_HW]
    if scene == "bedroom":
        m[[2, 3, 12, 13], :] = True
    elif scene == "kitchen":
        m[:, [2, 3, 12, 13]] = True
    elif scene == "bathroom":
        m = np.abs(ii - jj) <= 1
    elif scene == "office":
        m[:4, :4] = m[:4, -4:] = m[-4:, :4] = m[-4:, -4:] = True
    elif scene == "hallway":
        m[[0, 1, 14, 15], :] = True
        m[:, [0, 1, 14, 15]] = True
    elif scene == "lounge":
        m = np.abs(ii + jj - (IMAGE_HW - 1)) <= 1
    return m


def _stamp(canvas: np.ndarray, glyph: np.ndarray, color, top: int, left: int,
           size: int) -> None:
    reps = size // 6 + (1 if size % 6 else 0)
    big = np.kron(glyph, np.ones((reps, reps), dtype=bool))[:size, :size]
    h, w, _ = canvas.shape
    top = min(max(top, 0), h - size)
    left = min(max(left, 0), w - size)
    region = canvas[top:top + size, left:left + size]
    region[big] = color


def render_scene(scene: str, objects: list[str], salient: str | None,
                 style: RenderStyle, rng: np.random.Generator) -> np.ndarray:
    """Compose one uint8 (16,16,3) render. `salient`, when an object class,
    is drawn large and centered; when a scene class (or None) objects stay small."""
    canvas = np.empty((IMAGE_HW, IMAGE_HW, 3), dtype=np.float64)
    canvas[:] = SCENE_COLORS[scene]
    canvas[_scene_motif_mask(scene)] += 55.0
    canvas = np.clip(canvas, 0, 255)

    jitter = (lambda: int(rng.integers(-style.layout_jitter, style.layout_jitter + 1))) \
        if style.layout_jitter else (lambda: 0)
    small = [o for o in objects if o != salient]
    for slot, obj in zip(_SLOTS, small):
        _stamp(canvas, GLYPHS[obj], OBJECT_COLORS[obj],
               slot[0] + jitter(), slot[1] + jitter(), 6)
    if salient in OBJECT_CLASSES:
        _stamp(canvas, GLYPHS[salient], OBJECT_COLORS[salient],
               2 + jitter(), 2 + jitter(), 12)

    canvas = canvas * np.asarray(style.palette_scale) + np.asarray(style.palette_shift)
    canvas += rng.normal(0.0, style.noise_sigma, size=canvas.shape)
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def render_object_card(obj: str, style: RenderStyle) -> np.ndarray:
    """Canonical noise-free glyph card used for grounding candidates."""
    canvas = np.full((IMAGE_HW, IMAGE_HW, 3), 128.0)
    _stamp(canvas, GLYPHS[obj], OBJECT_COLORS[obj], 3, 3, 10)
    canvas = canvas * np.asarray(style.palette_scale) + np.asarray(style.palette_shift)
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def to_float(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64) / 255.0


@dataclass
class CorpusImage:
    index: int
    scene: str
    objects: list[str]
    salient: str
    style: str
    caption: str
    image: np.ndarray  # uint8


def compose_caption(scene: str, objects: list[str], salient: str,
                    rng: np.random.Generator) -> str:
    """Web-caption stand-in: mostly compositional (near-unique per image),
    sometimes terse alt-text naming only the salient class."""
    if rng.random() < 0.35:
        return f"a photo of a {salient}"
    if salient in SCENE_CLASSES:
        rest = " and a ".join(objects[:2])
        return f"a photo of a {salient} with a {rest}"
    extras = [o for o in objects if o != salient][:1]
    tail = f" and a {extras[0]}" if extras else ""
    return f"a photo of a {salient}{tail} in the {scene}"


def make_corpus(n: int, style_tag: str, rng: np.random.Generator) -> list[CorpusImage]:
    """Standalone labeled renders; the salient class is drawn uniformly over
    the full class union, so no class dominates."""
    style = STYLES[style_tag]
    out = []
    for i in range(n):
        salient = ALL_CLASSES[int(rng.integers(len(ALL_CLASSES)))]
        if salient in SCENE_CLASSES:
            scene = salient
            k = int(rng.integers(1, 3))
            objects = list(rng.choice(OBJECT_CLASSES, size=k, replace=False))
        else:
            scene = SCENE_CLASSES[int(rng.integers(len(SCENE_CLASSES)))]
            others = [o for o in OBJECT_CLASSES if o != salient]
            k = int(rng.integers(0, 2))
            objects = [salient] + list(rng.choice(others, size=k, replace=False))
        img = render_scene(scene, objects, salient, style, rng)
        out.append(CorpusImage(i, scene, objects, salient, style_tag,
                               compose_caption(scene, objects, salient, rng), img))
    return out


def save_png(img: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def content_address(img: np.ndarray) -> str:
    return hashlib.sha1(img.tobytes()).hexdigest()[:16]
