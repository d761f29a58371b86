"""Frames, masks and clips, plus the disk format shared by the pipeline and metrics.

Frames are stored as 8-bit RGB PNG. Procedural backends attach annotations
(glyph occupancy masks, rendered content tokens, the background layer) that
travel inside a compressed iTXt chunk, so a frame read back from disk is
indistinguishable from the one that was written.
"""
from __future__ import annotations

import base64
import io
import json
import math
import shutil
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image as PILImage
from PIL.PngImagePlugin import PngInfo

from ._util import atomic_write_bytes, sha256_hex, write_json
from .errors import CorruptedClipError, InvalidInputError, SamplingWarning

ANNOTATION_KEY = "scenecraft"
FRAME_PATTERN = "frame_{:05d}.png"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Glyph:
    """Occupancy record of one rendered character glyph."""

    key: str
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", _frozen(np.asarray(self.mask, dtype=bool)))

    def __eq__(self, other):
        return (
            isinstance(other, Glyph)
            and self.key == other.key
            and np.array_equal(self.mask, other.mask)
        )

    __hash__ = None


class Image:
    """Row-major 8-bit RGB raster with optional procedural annotations."""

    __slots__ = ("pixels", "glyphs", "tokens", "background")

    def __init__(self, pixels, glyphs=(), tokens=(), background=None):
        pixels = np.asarray(pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise InvalidInputError(f"expected an (H, W, 3) array, got shape {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise InvalidInputError("image dimensions must be at least 1x1")
        if pixels.dtype != np.uint8:
            if np.issubdtype(pixels.dtype, np.floating):
                pixels = np.clip(np.rint(pixels), 0, 255)
            pixels = pixels.astype(np.uint8)
        glyphs = tuple(glyphs)
        for g in glyphs:
            if g.mask.shape != pixels.shape[:2]:
                raise InvalidInputError("glyph mask does not match image dimensions")
        if background is not None:
            background = np.asarray(background, dtype=np.uint8)
            if background.shape != pixels.shape:
                raise InvalidInputError("background layer does not match image dimensions")
            background = _frozen(background)
        object.__setattr__(self, "pixels", _frozen(pixels))
        object.__setattr__(self, "glyphs", glyphs)
        object.__setattr__(self, "tokens", tuple(tokens))
        object.__setattr__(self, "background", background)

    def __setattr__(self, name, value):
        raise AttributeError("Image is immutable")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def glyph(self, key: str) -> Glyph | None:
        for g in self.glyphs:
            if g.key == key:
                return g
        return None

    def digest(self) -> str:
        return sha256_hex(encode_png(self))

    def pixel_digest(self) -> str:
        header = f"{self.width}x{self.height}:".encode()
        return sha256_hex(header + self.pixels.tobytes())

    def replace(self, **changes) -> "Image":
        fields = dict(
            pixels=self.pixels, glyphs=self.glyphs, tokens=self.tokens, background=self.background
        )
        fields.update(changes)
        return Image(**fields)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        same_bg = (self.background is None and other.background is None) or (
            self.background is not None
            and other.background is not None
            and np.array_equal(self.background, other.background)
        )
        return (
            np.array_equal(self.pixels, other.pixels)
            and self.glyphs == other.glyphs
            and self.tokens == other.tokens
            and same_bg
        )

    __hash__ = None

    def __repr__(self):
        return f"Image({self.width}x{self.height}, glyphs={[g.key for g in self.glyphs]})"


@dataclass(frozen=True, eq=False)
class Mask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise InvalidInputError("mask must be two-dimensional")
        object.__setattr__(self, "bits", _frozen(bits))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def coverage(self) -> float:
        return float(self.bits.mean())

    def is_empty(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other):
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True)
class Clip:
    frames: tuple
    fps: float
    scene_index: int | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise InvalidInputError("a clip needs at least one frame")
        if not self.fps > 0:
            raise InvalidInputError("fps must be positive")
        shape = frames[0].shape
        if any(fr.shape != shape for fr in frames):
            raise InvalidInputError("all frames in a clip must share dimensions")
        object.__setattr__(self, "frames", frames)

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return self.frame_count / self.fps

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


@dataclass(frozen=True)
class FrameSample:
    image: Image
    scene_index: int
    frame_index: int


# -- sampling / masking / concatenation ------------------------------------

def uniform_indices(length: int, f: int, include_first: bool = False) -> list[int]:
    if f < 1:
        raise InvalidInputError("f must be >= 1")
    if length < 1:
        raise InvalidInputError("cannot sample an empty clip")
    offset = 0.0 if include_first else 0.5
    return [min(length - 1, math.floor((j + offset) * length / f)) for j in range(f)]


def sample_uniform(clips: Sequence[Clip], f: int, include_first: bool = False) -> list[FrameSample]:
    """Pick ``f`` frames per clip at the midpoints of ``f`` equal segments.

    ``include_first`` switches to segment starts, which always takes frame 0.
    Scene labels fall back to the clip's position when ``scene_index`` is unset.
    """
    if f < 1:
        raise InvalidInputError("f must be >= 1")
    out = []
    for pos, clip in enumerate(clips):
        length = clip.frame_count
        if length < f:
            warnings.warn(
                f"clip {pos} has {length} frames < f={f}; samples will repeat",
                SamplingWarning,
                stacklevel=2,
            )
        scene = clip.scene_index if clip.scene_index is not None else pos
        for idx in uniform_indices(length, f, include_first):
            out.append(FrameSample(clip.frames[idx], scene, idx))
    return out


def apply_mask(image: Image, mask: Mask) -> Image:
    if mask.bits.shape != image.shape:
        raise InvalidInputError(
            f"mask {mask.width}x{mask.height} does not match image {image.width}x{image.height}"
        )
    pixels = np.where(mask.bits[..., None], image.pixels, 0).astype(np.uint8)
    return Image(pixels)


def concatenate(clips: Sequence[Clip]) -> Clip:
    if not clips:
        raise InvalidInputError("nothing to concatenate")
    fps = clips[0].fps
    shape = clips[0].frames[0].shape
    for c in clips[1:]:
        if c.fps != fps:
            raise InvalidInputError(f"fps mismatch: {c.fps} != {fps}")
        if c.frames[0].shape != shape:
            raise InvalidInputError("frame dimension mismatch between clips")
    if len(clips) == 1:
        return clips[0]
    frames = tuple(fr for c in clips for fr in c.frames)
    return Clip(frames, fps)


# -- PNG encoding ----------------------------------------------------------

def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _annotations(image: Image) -> dict | None:
    if not image.glyphs and not image.tokens and image.background is None:
        return None
    ann = {
        "glyphs": [{"key": g.key, "bits": _b64(np.packbits(g.mask).tobytes())} for g in image.glyphs],
        "tokens": list(image.tokens),
    }
    if image.background is not None:
        ann["background"] = _b64(image.background.tobytes())
    return ann


def encode_png(image: Image) -> bytes:
    info = PngInfo()
    ann = _annotations(image)
    if ann is not None:
        info.add_itxt(ANNOTATION_KEY, json.dumps(ann, separators=(",", ":")), zip=True)
    buf = io.BytesIO()
    PILImage.fromarray(image.pixels, "RGB").save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def decode_png(data: bytes) -> Image:
    with PILImage.open(io.BytesIO(data)) as im:
        im.load()
        text = getattr(im, "text", {}) or {}
        pixels = np.asarray(im.convert("RGB"))
    raw = text.get(ANNOTATION_KEY)
    if raw is None:
        return Image(pixels)
    ann = json.loads(raw)
    h, w = pixels.shape[:2]
    glyphs = []
    for g in ann.get("glyphs", []):
        bits = np.unpackbits(np.frombuffer(base64.b64decode(g["bits"]), dtype=np.uint8))
        glyphs.append(Glyph(g["key"], bits[: h * w].reshape(h, w).astype(bool)))
    background = None
    if "background" in ann:
        background = np.frombuffer(base64.b64decode(ann["background"]), dtype=np.uint8).reshape(h, w, 3)
    return Image(pixels, glyphs=glyphs, tokens=ann.get("tokens", ()), background=background)


def save_image(image: Image, path) -> None:
    atomic_write_bytes(Path(path), encode_png(image))


def load_image(path) -> Image:
    return decode_png(Path(path).read_bytes())


# -- clip directories ------------------------------------------------------

def write_clip(clip: Clip, directory) -> dict:
    """Write ``clip`` as a PNG sequence plus ``manifest.json`` and return the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(clip.frames):
        name = FRAME_PATTERN.format(i)
        (directory / name).write_bytes(encode_png(frame))
        names.append(name)
    manifest = {
        "fps": clip.fps,
        "frame_count": clip.frame_count,
        "width": clip.width,
        "height": clip.height,
        "frames": names,
    }
    write_json(directory / "manifest.json", manifest)
    return manifest


def read_clip(directory, scene_index: int | None = None) -> Clip:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise CorruptedClipError(f"{directory}: no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        names = list(manifest["frames"])
        fps = manifest["fps"]
        count = int(manifest["frame_count"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptedClipError(f"{manifest_path}: unreadable manifest ({exc})") from exc
    if count != len(names):
        raise CorruptedClipError(
            f"{manifest_path}: frame_count {count} disagrees with {len(names)} listed frames"
        )
    on_disk = sorted(p.name for p in directory.glob("frame_*.png"))
    if len(on_disk) != count:
        raise CorruptedClipError(f"{directory}: manifest lists {count} frames, found {len(on_disk)}")
    frames = []
    for name in names:
        path = directory / name
        if not path.is_file():
            raise CorruptedClipError(f"{directory}: missing frame {name}")
        frames.append(load_image(path))
    clip = Clip(tuple(frames), fps, scene_index)
    if (clip.width, clip.height) != (manifest.get("width", clip.width), manifest.get("height", clip.height)):
        raise CorruptedClipError(f"{manifest_path}: frame size disagrees with manifest")
    return clip


def write_clip_atomic(clip: Clip, directory) -> dict:
    """Write into a sibling temp directory, then rename into place."""
    directory = Path(directory)
    tmp = directory.with_name(f".{directory.name}.tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    manifest = write_clip(clip, tmp)
    if directory.exists():
        shutil.rmtree(directory)
    tmp.rename(directory)
    return manifest
