"""JSON payload encoding for rasters, masks and clips on the HTTP contract."""
from __future__ import annotations

import base64

import numpy as np

from ..errors import MalformedBackendOutputError
from ..media import Clip, Image, Mask


def image_to_wire(image: Image) -> dict:
    return {
        "width": image.width,
        "height": image.height,
        "data": base64.b64encode(image.pixels.tobytes()).decode("ascii"),
    }


def image_from_wire(obj) -> Image:
    try:
        w, h = int(obj["width"]), int(obj["height"])
        raw = base64.b64decode(obj["data"], validate=True)
        if w < 1 or h < 1 or len(raw) != w * h * 3:
            raise ValueError(f"payload of {len(raw)} bytes does not fit {w}x{h} RGB8")
        return Image(np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedBackendOutputError(f"bad image payload: {exc}", raw=obj) from None


def mask_to_wire(mask: Mask) -> dict:
    return {
        "width": mask.width,
        "height": mask.height,
        "bits": base64.b64encode(np.packbits(mask.bits).tobytes()).decode("ascii"),
    }


def mask_from_wire(obj) -> Mask:
    try:
        w, h = int(obj["width"]), int(obj["height"])
        raw = np.frombuffer(base64.b64decode(obj["bits"], validate=True), dtype=np.uint8)
        bits = np.unpackbits(raw)
        if w < 1 or h < 1 or bits.size < w * h:
            raise ValueError("mask payload too short")
        return Mask(bits[: w * h].reshape(h, w).astype(bool))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedBackendOutputError(f"bad mask payload: {exc}", raw=obj) from None


def clip_from_wire(obj, scene_index=None) -> Clip:
    try:
        frames = tuple(image_from_wire(f) for f in obj["frames"])
        return Clip(frames, float(obj["fps"]), scene_index)
    except MalformedBackendOutputError:
        raise
    except Exception as exc:
        raise MalformedBackendOutputError(f"bad clip payload: {exc}", raw=obj) from None
