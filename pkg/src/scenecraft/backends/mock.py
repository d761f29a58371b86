"""Deterministic procedural stand-ins for every backend role.

Characters are drawn as solid glyphs whose shape, size and palette colour
come from a hash of their physical description. The three pipeline configurations
differ only in where scene glyphs come from:

* with character references, glyph pixels are copied from the reference;
* without references, the glyph is re-derived from text and its hue drifts
  by a bounded, scene-indexed offset;
* without a seed frame, the glyph is re-rolled per scene (new shape, size
  and a different palette colour).

Renderers annotate their output with exact glyph masks and the content
tokens they honoured; the mock segmenter and judge read those annotations.
"""
from __future__ import annotations

import colorsys
import hashlib
import math
import re
import warnings

import numpy as np
from scipy import ndimage

from .._util import pick, stable_hash, unit_hash
from ..blueprint import (
    ArtStyle,
    Blueprint,
    CharacterSheet,
    SceneSpec,
    ScriptConstraints,
)
from ..errors import InvalidInputError, ScoreClampedWarning
from ..media import Clip, Glyph, Image, Mask

FPS = 24
SHAPES = ("square", "circle", "triangle", "diamond", "cross", "ring")

# Baseline-1 hue drift bounds in degrees; the upper bound never exceeds 60.
DRIFT_MIN_DEG = 6.0
DRIFT_MAX_DEG = 15.0
REROLL_SALT = "t2v-reroll"

_STOPWORDS = frozenset(
    "the and with for from into onto that this their there then than while where when who "
    "its his her our your are was were has have had not but all any each over under near "
    "very just some more most".split()
)


def content_tokens(text: str) -> list[str]:
    """Lower-case word tokens of length >= 3, stopwords removed, first-seen order."""
    seen = []
    for tok in re.findall(r"[a-z0-9]+", text.lower()):
        if len(tok) >= 3 and tok not in _STOPWORDS and tok not in seen:
            seen.append(tok)
    return seen


def glyph_key(description: str) -> str:
    return hashlib.sha256(description.encode("utf-8")).hexdigest()[:16]


def rotate_hue(rgb, degrees: float) -> tuple[int, int, int]:
    h, sat, val = colorsys.rgb_to_hsv(*(c / 255.0 for c in rgb))
    r, g, b = colorsys.hsv_to_rgb((h + degrees / 360.0) % 1.0, sat, val)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


# Colours sitting on the embedder's histogram bin centres, greys excluded.
PALETTE = tuple(
    (r, g, b)
    for r in (0, 128, 255)
    for g in (0, 128, 255)
    for b in (0, 128, 255)
    if not r == g == b
)


def shape_mask(shape: str, size: int) -> np.ndarray:
    """Boolean ``size x size`` stencil for one of :data:`SHAPES`."""
    if size < 3:
        raise InvalidInputError("glyph size must be >= 3")
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    dx, dy = xx - c, yy - c
    r = size / 2.0
    if shape == "square":
        m = np.ones((size, size), bool)
    elif shape == "circle":
        m = dx**2 + dy**2 <= r**2
    elif shape == "ring":
        d2 = dx**2 + dy**2
        m = (d2 <= r**2) & (d2 >= (0.45 * r) ** 2)
    elif shape == "diamond":
        m = np.abs(dx) + np.abs(dy) <= r
    elif shape == "triangle":
        m = np.abs(dx) <= (yy + 1) / 2.0
    elif shape == "cross":
        arm = max(1.0, size / 6.0)
        m = (np.abs(dx) <= arm) | (np.abs(dy) <= arm)
    else:
        raise InvalidInputError(f"unknown shape {shape!r}")
    return m


class GlyphStyle:
    """Shape, size and colour of one rendered character glyph."""

    __slots__ = ("shape", "size", "rgb")

    def __init__(self, shape: str, size: int, rgb):
        self.shape, self.size, self.rgb = shape, int(size), tuple(int(c) for c in rgb)

    def sprite(self):
        alpha = shape_mask(self.shape, self.size)
        rgb = np.zeros((self.size, self.size, 3), np.uint8)
        rgb[alpha] = self.rgb
        return rgb, alpha

    def __repr__(self):
        return f"GlyphStyle({self.shape}, {self.size}px, rgb={self.rgb})"


def palette_index(description: str) -> int:
    return stable_hash("colour", description) % len(PALETTE)


def identity_glyph(description: str, canvas) -> GlyphStyle:
    """Glyph determined by the description alone."""
    size = max(5, int(round(min(canvas) * (0.22 + 0.06 * unit_hash("size", description)))))
    return GlyphStyle(pick(SHAPES, "shape", description), size, PALETTE[palette_index(description)])


def drift_offset(description: str, scene_index: int) -> float:
    """Hue offset for text-only re-derivation.

    The sign is fixed per character and the magnitude, in
    [DRIFT_MIN_DEG, DRIFT_MAX_DEG], varies with the scene.
    """
    sign = 1.0 if stable_hash("drift-sign", description) % 2 == 0 else -1.0
    u = unit_hash("drift", description, scene_index)
    return sign * (DRIFT_MIN_DEG + (DRIFT_MAX_DEG - DRIFT_MIN_DEG) * u)


def drifted_glyph(description: str, scene_index: int, canvas) -> GlyphStyle:
    g = identity_glyph(description, canvas)
    return GlyphStyle(g.shape, g.size, rotate_hue(g.rgb, drift_offset(description, scene_index)))


def reroll_colour(description: str, scene_index: int) -> tuple[int, int, int]:
    """Palette colour for a re-rolled glyph; never the identity colour, distinct across scenes."""
    base = palette_index(description)
    order = sorted(
        (i for i in range(len(PALETTE)) if i != base),
        key=lambda i: stable_hash(REROLL_SALT, "order", description, i),
    )
    return PALETTE[order[scene_index % len(order)]]


def rerolled_glyph(description: str, scene_index: int, canvas) -> GlyphStyle:
    g = identity_glyph(description, canvas)
    others = [s for s in SHAPES if s != g.shape]
    shape = pick(others, REROLL_SALT, "shape", description, scene_index)
    u = unit_hash(REROLL_SALT, "size", description, scene_index)
    size = max(5, int(round(min(canvas) * (0.16 + 0.16 * u))))
    return GlyphStyle(shape, size, reroll_colour(description, scene_index))


def motion_velocity(action: str) -> tuple[int, int]:
    """Integer (vx, vy) pixels/frame derived from the scene action text."""
    h = stable_hash("velocity", action)
    return (h % 7) - 3, ((h // 7) % 7) - 3


def _reflect(value: float, lo: float, hi: float) -> float:
    """Triangle-wave fold of ``value`` into [lo, hi]."""
    span = hi - lo
    if span <= 0:
        return lo
    t = (value - lo) % (2 * span)
    return lo + (t if t <= span else 2 * span - t)


def setting_background(setting: str, style: ArtStyle, canvas) -> np.ndarray:
    """Muted, smoothly textured backdrop keyed by setting and aesthetic."""
    w, h = canvas
    seed = stable_hash("background", setting, style.aesthetic_name)
    rng = np.random.default_rng(seed)
    hue = unit_hash("bg-hue", setting)
    base = np.array(colorsys.hsv_to_rgb(hue, 0.25, 0.55)) * 255.0
    coarse = rng.standard_normal((h // 8 + 2, w // 8 + 2))
    coarse = ndimage.zoom(coarse, (h / coarse.shape[0], w / coarse.shape[1]), order=1)[:h, :w]
    fine = ndimage.gaussian_filter(rng.standard_normal((h, w)), 1.2, mode="wrap")
    fine /= fine.std() + 1e-12
    lum = 28.0 * coarse + 22.0 * fine
    img = base[None, None, :] + lum[..., None]
    return np.clip(np.rint(img), 12, 243).astype(np.uint8)


def _layout(count: int, canvas, sizes, salt) -> list[tuple[int, int]]:
    """Top-left corners for ``count`` glyphs spread horizontally."""
    w, h = canvas
    out = []
    for i, size in enumerate(sizes):
        cx = w * (i + 1) / (count + 1)
        cy = h / 2 + (unit_hash("layout", salt, i) - 0.5) * h / 4
        x = int(np.clip(round(cx - size / 2), 0, w - size))
        y = int(np.clip(round(cy - size / 2), 0, h - size))
        out.append((x, y))
    return out


def _composite(background: np.ndarray, sprites) -> tuple[np.ndarray, list[Glyph]]:
    """Paste ``(key, rgb, alpha, x, y)`` sprites in order; later sprites occlude earlier ones."""
    frame = background.copy()
    h, w = frame.shape[:2]
    masks = []
    for key, rgb, alpha, x, y in sprites:
        full = np.zeros((h, w), bool)
        sh, sw = alpha.shape
        y0, x0 = max(y, 0), max(x, 0)
        y1, x1 = min(y + sh, h), min(x + sw, w)
        if y1 > y0 and x1 > x0:
            a = alpha[y0 - y : y1 - y, x0 - x : x1 - x]
            region = frame[y0:y1, x0:x1]
            region[a] = rgb[y0 - y : y1 - y, x0 - x : x1 - x][a]
            full[y0:y1, x0:x1] = a
        for _, m in masks:
            m &= ~full
        masks.append((key, full))
    return frame, [Glyph(k, m) for k, m in masks]


def _sprite_from(image: Image, glyph: Glyph):
    ys, xs = np.nonzero(glyph.mask)
    if ys.size == 0:
        return None
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    alpha = glyph.mask[y0:y1, x0:x1].copy()
    rgb = np.where(alpha[..., None], image.pixels[y0:y1, x0:x1], 0).astype(np.uint8)
    return rgb, alpha, int(x0), int(y0)


def honoured_tokens(scene: SceneSpec, style: ArtStyle) -> tuple[str, ...]:
    """Content the mock video model actually renders for ``scene``.

    Setting and style are always honoured; action and cinematography
    tokens only partially, which is what separates script from prompt
    adherence under the mock judge.
    """
    keep = content_tokens(scene.setting) + content_tokens(style.aesthetic_name)
    for tok in content_tokens(scene.action):
        if unit_hash("honour-action", tok, scene.index) < 0.55:
            keep.append(tok)
    for tok in content_tokens(scene.visual_notes):
        if unit_hash("honour-notes", tok, scene.index) < 0.4:
            keep.append(tok)
    return tuple(sorted(set(keep)))


# -- mock blueprint vocabulary ----------------------------------------------

_PLACES = (
    "moonlit rooftop", "crowded bazaar", "misty forest clearing", "riverside ghat",
    "desert caravan camp", "castle courtyard", "neon city alley", "village temple steps",
    "snowy mountain pass", "quiet library", "harbour at dawn", "monsoon street",
)
_ACTIONS = (
    "leaps across the gap", "searches for a lost key", "chases a runaway kite",
    "argues about the map", "sneaks past the guard", "dances under falling petals",
    "discovers a hidden door", "races toward the bell tower", "shares a quiet meal",
    "escapes through the window", "repairs the broken cart", "follows glowing footprints",
)
_NOTES = (
    "slow dolly shot with warm rim light", "handheld close-up, shallow focus",
    "wide establishing shot at golden hour", "overhead crane shot through haze",
    "tracking shot with lantern glow", "static frame, soft diffuse light",
)
_TONES = ("hopeful", "tense", "playful", "melancholic", "triumphant", "mysterious")
_SOUNDS = (
    "wind chimes", "distant thunder", "footsteps on stone", "market chatter",
    "rustling leaves", "temple bell", "rain on tin roof", "crackling fire",
)
_NAMES = ("Mira", "Tomas", "Asha", "Leo", "Kavi", "Juno", "Ravi", "Elsa", "Nia", "Oren", "Tara", "Ivo")
_ROLES = ("protagonist", "companion", "rival", "mentor")
_CREATURES = ("tabby cat", "young scribe", "street musician", "clockwork fox", "river spirit", "old sailor")
_TRAITS = ("curious", "stubborn", "gentle", "restless", "witty", "brave")
_STYLES = ("Storybook Watercolor", "Gritty Epic CGI", "Paper Cutout Animation", "Neon Noir", "Claymation")


class MockBackend:
    """Procedural implementation of every backend role.

    Pure given ``(inputs, seed)``: repeated calls are bit-identical.
    """

    kind = "mock"

    def __init__(self, seed: int = 0, canvas=(64, 64), embed_dim: int = 64, fps: int = FPS):
        if embed_dim < 28:
            raise InvalidInputError("embed_dim must be >= 28")
        self.seed = int(seed)
        self.canvas = (int(canvas[0]), int(canvas[1]))
        self.embed_dim = int(embed_dim)
        self.fps = fps

    @classmethod
    def from_config(cls, cfg) -> "MockBackend":
        opts = cfg.options or {}
        return cls(cfg.mock_seed, tuple(opts.get("canvas", (64, 64))), int(opts.get("embed_dim", 64)))

    # scriptwriter --------------------------------------------------------

    def write_script(self, prompt: str, constraints: ScriptConstraints | None = None) -> Blueprint:
        if not prompt or not prompt.strip():
            raise InvalidInputError("prompt must be non-empty")
        constraints = constraints or ScriptConstraints()
        key = (prompt, self.seed)
        n_scenes = min(max(2 + stable_hash("n-scenes", *key) % 3, constraints.min_scenes), constraints.max_scenes)
        n_chars = 1 + stable_hash("n-chars", *key) % 3

        names = list(_NAMES)
        start = stable_hash("names", *key) % len(names)
        names = names[start:] + names[:start]
        characters = []
        for i in range(n_chars):
            token = hashlib.sha256(f"{prompt}\x1f{self.seed}\x1f{i}".encode()).hexdigest()[:6]
            creature = pick(_CREATURES, "creature", *key, i)
            characters.append(
                CharacterSheet(
                    name=names[i],
                    role=_ROLES[min(i, len(_ROLES) - 1)],
                    personality=pick(_TRAITS, "trait", *key, i),
                    physical_description=f"a {pick(_TRAITS, 'look', *key, i)} {creature} marked glyph-{token}",
                    visual_notes=f"silhouette reads clearly; signature mark glyph-{token}",
                    arc=f"learns to trust others in {prompt.strip()}",
                )
            )

        durations = [d for d in (4.0, 6.0, 8.0) if d <= constraints.max_scene_seconds] or [
            constraints.max_scene_seconds
        ]
        scenes = []
        place = pick(_PLACES, "place", *key, 0)
        for k in range(n_scenes):
            if k > 0 and unit_hash("same-place", *key, k) >= 0.4:
                place = pick(_PLACES, "place", *key, k)
            cast = [characters[0].name]
            for i in range(1, n_chars):
                if unit_hash("cast", *key, k, i) < 0.5 or k == (i % n_scenes):
                    cast.append(characters[i].name)
            scenes.append(
                SceneSpec(
                    index=k,
                    duration_seconds=pick(durations, "duration", *key, k),
                    setting=f"{place}, in {prompt.strip()}",
                    action=f"{cast[0]} {pick(_ACTIONS, 'action', *key, k)}",
                    characters=tuple(cast),
                    visual_notes=pick(_NOTES, "notes", *key, k),
                    sound_effects=(pick(_SOUNDS, "sfx", *key, k), pick(_SOUNDS, "sfx2", *key, k)),
                    emotional_tone=pick(_TONES, "tone", *key, k),
                )
            )
        style = pick(_STYLES, "style", *key)
        return Blueprint(
            themes=tuple(content_tokens(prompt)) or ("story",),
            art_style=ArtStyle(style, ("muted earth", "accent glow"), (f"{style} reference board",)),
            characters=tuple(characters),
            scenes=tuple(scenes),
        )

    def bridge_answer(self, scene: SceneSpec, previous: SceneSpec) -> str:
        return "yes" if scene.setting == previous.setting else "no"

    # t2i -----------------------------------------------------------------

    def synthesize_character(self, sheet: CharacterSheet, style: ArtStyle) -> Image:
        if not sheet.physical_description.strip():
            raise InvalidInputError(f"character {sheet.name!r} has no physical description")
        w, h = self.canvas
        hue = unit_hash("ref-bg", style.aesthetic_name)
        bg_rgb = np.array(colorsys.hsv_to_rgb(hue, 0.1, 0.8)) * 255.0
        background = np.broadcast_to(np.rint(bg_rgb).astype(np.uint8), (h, w, 3)).copy()
        g = identity_glyph(sheet.physical_description, self.canvas)
        rgb, alpha = g.sprite()
        x, y = (w - g.size) // 2, (h - g.size) // 2
        key = glyph_key(sheet.physical_description)
        pixels, glyphs = _composite(background, [(key, rgb, alpha, x, y)])
        return Image(pixels, glyphs=glyphs, tokens=tuple(content_tokens(sheet.physical_description)))

    # i2i -----------------------------------------------------------------

    def synthesize_seed(self, scene: SceneSpec, style: ArtStyle, refs=(), prior: Image | None = None,
                        sheets=()) -> Image:
        """Initial frame for ``scene``.

        ``refs`` are character assets (exact glyph copies); characters without
        a reference are re-derived from their sheet in ``sheets`` with a
        scene-indexed hue drift. ``prior`` blends half of the previous
        scene's final frame into the background.
        """
        if prior is not None and scene.index == 0:
            raise InvalidInputError("scene 0 has no preceding scene to bridge from")
        background = setting_background(scene.setting, style, self.canvas).astype(np.float64)
        if prior is not None:
            if prior.shape != background.shape[:2]:
                raise InvalidInputError("prior frame size does not match the canvas")
            background = 0.5 * background + 0.5 * prior.pixels
        background = np.rint(background).astype(np.uint8)

        by_name = {getattr(r, "character_name", None): r for r in refs}
        sheet_by_name = {s.name: s for s in sheets}
        pieces = []
        for name in scene.characters:
            ref = by_name.get(name)
            if ref is not None:
                canonical = ref.canonical
                if not canonical.glyphs:
                    raise InvalidInputError(f"reference for {name!r} carries no glyph record")
                glyph = canonical.glyphs[0]
                rgb, alpha, _, _ = _sprite_from(canonical, glyph)
                pieces.append((glyph.key, rgb, alpha))
                continue
            sheet = sheet_by_name.get(name)
            if sheet is None:
                raise InvalidInputError(f"no reference or sheet for character {name!r}")
            g = drifted_glyph(sheet.physical_description, scene.index, self.canvas)
            rgb, alpha = g.sprite()
            pieces.append((glyph_key(sheet.physical_description), rgb, alpha))
        return self._stage(background, pieces, scene, tokens=content_tokens(scene.setting))

    def _stage(self, background, pieces, scene, tokens) -> Image:
        corners = _layout(len(pieces), self.canvas, [p[2].shape[0] for p in pieces], scene.setting)
        sprites = [(k, rgb, a, x, y) for (k, rgb, a), (x, y) in zip(pieces, corners)]
        pixels, glyphs = _composite(background, sprites)
        return Image(pixels, glyphs=glyphs, tokens=tuple(tokens), background=background)

    # i2v -----------------------------------------------------------------

    def synthesize_clip(self, seed: Image | None, scene: SceneSpec, style: ArtStyle, sheets=()) -> Clip:
        """Animate ``seed`` along a path derived from the action text.

        Without a seed the model works text-to-video: each character's glyph
        is re-rolled for this scene from its description.
        """
        frame_count = max(1, int(round(scene.duration_seconds * self.fps)))
        if seed is None:
            background = setting_background(scene.setting, style, self.canvas)
            sheet_by_name = {s.name: s for s in sheets}
            pieces = []
            for name in scene.characters:
                sheet = sheet_by_name.get(name)
                if sheet is None:
                    raise InvalidInputError(f"text-to-video needs a sheet for {name!r}")
                g = rerolled_glyph(sheet.physical_description, scene.index, self.canvas)
                rgb, alpha = g.sprite()
                pieces.append((glyph_key(sheet.physical_description), rgb, alpha))
            seed = self._stage(background, pieces, scene, tokens=())
        tokens = honoured_tokens(scene, style)
        frames = self._animate(seed, motion_velocity(scene.action), frame_count, tokens)
        return Clip(tuple(frames), float(self.fps), scene.index)

    def _animate(self, seed: Image, velocity, frame_count: int, tokens) -> list[Image]:
        h, w = seed.shape
        sprites = [s for s in (_sprite_from(seed, g) for g in seed.glyphs)]
        keyed = [(g.key, s) for g, s in zip(seed.glyphs, sprites) if s is not None]
        background = seed.background if seed.background is not None else seed.pixels
        if not keyed or velocity == (0, 0):
            still = Image(seed.pixels, glyphs=seed.glyphs, tokens=tokens)
            return [still] * frame_count
        x0 = min(s[2] for _, s in keyed)
        y0 = min(s[3] for _, s in keyed)
        x1 = max(s[2] + s[1].shape[1] for _, s in keyed)
        y1 = max(s[3] + s[1].shape[0] for _, s in keyed)
        vx, vy = velocity
        frames = []
        for t in range(frame_count):
            ox = int(_reflect(vx * t, -x0, w - x1))
            oy = int(_reflect(vy * t, -y0, h - y1))
            placed = [(k, rgb, a, x + ox, y + oy) for k, (rgb, a, x, y) in keyed]
            pixels, glyphs = _composite(background, placed)
            frames.append(Image(pixels, glyphs=glyphs, tokens=tokens))
        return frames

    # judge ---------------------------------------------------------------

    def judge_frames(self, frames, reference: Image | None, rubric: str, context: str) -> float:
        frames = list(frames)
        if not frames:
            raise InvalidInputError("judge needs at least one frame")
        if rubric == "consistency_0_10":
            if reference is None:
                raise InvalidInputError("consistency rubric needs a reference image")
            key = glyph_key(context)
            ref_color = _glyph_color(reference, key)
            if ref_color is None:
                raise InvalidInputError("reference image shows no glyph to compare against")
            scores = []
            for fr in frames:
                col = _glyph_color(fr, key, fallback=False)
                if col is None:
                    scores.append(0.0)
                    continue
                dist = np.linalg.norm(col - ref_color) / (255.0 * math.sqrt(3.0))
                scores.append(10.0 * (1.0 - dist))
            return _clamp(float(np.mean(scores)), 0.0, 10.0)
        if rubric == "adherence_1_5":
            wanted = content_tokens(context)
            if not wanted:
                return 5.0
            seen = set()
            for fr in frames:
                seen.update(fr.tokens)
            hit = sum(1 for t in wanted if t in seen)
            return 1.0 + 4.0 * hit / len(wanted)
        raise InvalidInputError(f"unknown rubric {rubric!r}")

    # embedder ------------------------------------------------------------

    def embed(self, image: Image, condition: str | None = None) -> np.ndarray:
        return histogram_embedding(image, self.embed_dim, condition)

    # segmenter -----------------------------------------------------------

    def segment(self, image: Image, target: str) -> Mask:
        if not target or not target.strip():
            raise InvalidInputError("segmentation target must be non-empty")
        g = image.glyph(glyph_key(target))
        if g is None:
            return Mask(np.zeros(image.shape, bool))
        return Mask(g.mask)


def _glyph_color(image: Image, key: str, fallback: bool = True):
    g = image.glyph(key)
    if g is not None and g.mask.any():
        mask = g.mask
    elif fallback and image.glyphs:
        mask = np.logical_or.reduce([x.mask for x in image.glyphs])
        if not mask.any():
            return None
    else:
        return None
    return image.pixels[mask].astype(np.float64).mean(axis=0)


def _clamp(x: float, lo: float, hi: float) -> float:
    if x < lo or x > hi:
        warnings.warn(f"score {x} clamped into [{lo}, {hi}]", ScoreClampedWarning, stacklevel=3)
    return min(max(x, lo), hi)


# -- desk-scale feature extractor -------------------------------------------

GRID = 4
BINS = 3
SALT_BASE = 0.05
SALT_SPAN = 0.1


def _soft_bins(values: np.ndarray) -> np.ndarray:
    """Linear-interpolation weights of 8-bit values over 3 bins centred at 0, 127.5, 255."""
    p = values.astype(np.float64) / 127.5
    lo = np.minimum(np.floor(p), BINS - 2).astype(int)
    t = p - lo
    w = np.zeros(values.shape + (BINS,))
    np.put_along_axis(w, lo[..., None], (1.0 - t)[..., None], axis=-1)
    np.put_along_axis(w, (lo + 1)[..., None], t[..., None], axis=-1)
    return w


def histogram_embedding(image: Image, dim: int = 64, condition: str | None = None) -> np.ndarray:
    """Unit-norm colour-layout descriptor of the non-black content of ``image``.

    The tight box around non-black pixels is split into a 4x4 grid and each
    cell gets a soft joint colour histogram with 3 bins per channel (27
    bins). When ``dim - 1`` cannot hold all 16 cells, cells are pooled into
    ``(dim - 1) // 27`` groups by ``cell % groups`` so colour bins never
    mix; leftover slots stay zero. The last component is a salt derived
    from ``condition``. Pure black pixels count as masked out, which makes
    the descriptor translation invariant for masked glyphs.
    """
    if dim < BINS**3 + 1:
        raise InvalidInputError(f"embedding dimension must be >= {BINS**3 + 1}")
    groups = min(GRID * GRID, (dim - 1) // BINS**3)
    px = image.pixels
    occupied = px.any(axis=2)
    hist = np.zeros(dim - 1)
    if occupied.any():
        ys, xs = np.nonzero(occupied)
        y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
        cell = ((ys - y0) * GRID // (y1 - y0)) * GRID + (xs - x0) * GRID // (x1 - x0)
        vals = px[ys, xs]
        wr, wg, wb = (_soft_bins(vals[:, c]) for c in range(3))
        joint = (wr[:, :, None, None] * wg[:, None, :, None] * wb[:, None, None, :]).reshape(-1, BINS**3)
        pooled = np.zeros((groups, BINS**3))
        np.add.at(pooled, cell % groups, joint)
        hist[: pooled.size] = pooled.ravel() / ys.size
        hist /= np.linalg.norm(hist)
    salt = SALT_BASE + (SALT_SPAN * unit_hash("salt", condition) if condition else 0.0)
    vec = np.append(hist, salt)
    return vec / np.linalg.norm(vec)
