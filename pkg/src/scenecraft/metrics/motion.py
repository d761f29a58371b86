"""Motion statistics built on dense flow: dynamic degree, grid tracks, tiers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from ..errors import InvalidInputError
from ..media import Clip
from .flow import FlowField, FlowParams, farneback_flow, to_gray

TIERS = ("Low", "Medium", "High")
DEFAULT_FB_THRESHOLD = 1.0
DEFAULT_SPACING = 8
# mean absolute luminance difference over a 3x3 patch, 0-255 scale;
# None turns the appearance check off
DEFAULT_PHOTOMETRIC_THRESHOLD = 24.0
_PATCH = [(ox, oy) for oy in (-1.0, 0.0, 1.0) for ox in (-1.0, 0.0, 1.0)]


def clip_flows(clip: Clip, p: FlowParams | None = None, backward: bool = False) -> list[FlowField]:
    """Flow between consecutive frames; ``backward`` gives t -> t-1 instead."""
    frames = clip.frames
    if backward:
        return [farneback_flow(frames[t], frames[t - 1], p) for t in range(1, len(frames))]
    return [farneback_flow(frames[t - 1], frames[t], p) for t in range(1, len(frames))]


def dynamic_degree(clip: Clip, p: FlowParams | None = None, flows: Sequence[FlowField] | None = None) -> float:
    """Mean over consecutive pairs of the mean per-pixel flow magnitude (px/frame)."""
    if clip.frame_count < 2:
        raise InvalidInputError("dynamic degree needs at least two frames")
    if flows is None:
        flows = clip_flows(clip, p)
    return float(np.mean([fl.magnitude().mean() for fl in flows]))


@dataclass(frozen=True)
class TrackRecord:
    origin: tuple[float, float]
    positions: tuple[tuple[float, float], ...]
    visible: tuple[bool, ...]

    def __post_init__(self):
        if len(self.positions) != len(self.visible):
            raise InvalidInputError("positions and visibility lengths differ")
        if not self.visible or not self.visible[0]:
            raise InvalidInputError("a track must be visible at frame 0")

    @property
    def visibility(self) -> float:
        return sum(self.visible) / len(self.visible)


def _bilinear(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(arr, np.stack([ys, xs]), order=1, mode="nearest")


def _lookup(field: FlowField, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _bilinear(field.u, xs, ys), _bilinear(field.v, xs, ys)


def _patch_error(prev: np.ndarray, cur: np.ndarray, x, y, nx, ny) -> np.ndarray:
    err = np.zeros(x.shape)
    for ox, oy in _PATCH:
        err += np.abs(_bilinear(cur, nx + ox, ny + oy) - _bilinear(prev, x + ox, y + oy))
    return err / len(_PATCH)


def track_grid(clip: Clip, spacing: int = DEFAULT_SPACING, p: FlowParams | None = None,
               fb_threshold: float = DEFAULT_FB_THRESHOLD,
               photometric_threshold: float | None = DEFAULT_PHOTOMETRIC_THRESHOLD,
               forward=None, backward=None) -> list[TrackRecord]:
    """Advect a regular grid through the clip and flag per-frame visibility.

    A point is visible at frame t when it is inside the frame and carrying it
    back with the reverse flow lands within ``fb_threshold`` of where it was
    at t-1. A failed check does not stop the track, so it may become visible
    again later; leaving the frame does, and it stays invisible from then on.

    Polynomial-expansion flow is close to antisymmetric, so on content that
    was replaced outright the forward and backward estimates tend to cancel
    and pass the round trip. ``photometric_threshold`` adds a luminance
    constancy test on a 3x3 patch around the old and new position to
    catch that case.
    """
    T = clip.frame_count
    if T < 2:
        raise InvalidInputError("tracking needs at least two frames")
    if spacing < 2:
        raise InvalidInputError("spacing must be >= 2")
    h, w = clip.height, clip.width
    if spacing > min(w, h):
        raise InvalidInputError(f"spacing {spacing} larger than the {w}x{h} frame")
    forward = forward if forward is not None else clip_flows(clip, p)
    backward = backward if backward is not None else clip_flows(clip, p, backward=True)

    gx, gy = np.meshgrid(np.arange(spacing // 2, w, spacing, dtype=np.float64),
                         np.arange(spacing // 2, h, spacing, dtype=np.float64))
    x, y = gx.ravel(), gy.ravel()
    n = x.size
    xs, ys = np.empty((T, n)), np.empty((T, n))
    vis = np.zeros((T, n), dtype=bool)
    xs[0], ys[0], vis[0] = x, y, True
    inside = np.ones(n, dtype=bool)
    gray = [to_gray(fr) for fr in clip.frames] if photometric_threshold is not None else None
    for t in range(1, T):
        du, dv = _lookup(forward[t - 1], x, y)
        nx, ny = x + du, y + dv
        inside &= (nx >= 0) & (nx <= w - 1) & (ny >= 0) & (ny <= h - 1)
        bu, bv = _lookup(backward[t - 1], nx, ny)
        ok = np.hypot(nx + bu - x, ny + bv - y) <= fb_threshold
        if gray is not None:
            ok &= _patch_error(gray[t - 1], gray[t], x, y, nx, ny) <= photometric_threshold
        vis[t] = inside & ok
        # points that left the frame are frozen where they exited
        x, y = np.where(inside, nx, x), np.where(inside, ny, y)
        xs[t], ys[t] = x, y

    return [
        TrackRecord(
            origin=(float(xs[0, i]), float(ys[0, i])),
            positions=tuple(zip(xs[:, i].tolist(), ys[:, i].tolist())),
            visible=tuple(vis[:, i].tolist()),
        )
        for i in range(n)
    ]


def world_consistency(tracks: Sequence[TrackRecord]) -> float:
    """Mean fraction of frames in which each tracked point is visible."""
    if not tracks:
        raise InvalidInputError("world consistency needs at least one track")
    return float(np.mean([tr.visibility for tr in tracks]))


def classify_motion_tiers(degrees: Iterable[tuple[str, float]]) -> dict[str, str]:
    """Tertile split by dynamic degree; ties are ordered by video id.

    After sorting, ranks 1..ceil(N/3) are Low, up to ceil(2N/3) Medium, the
    rest High.
    """
    items = [(str(vid), float(deg)) for vid, deg in degrees]
    if len(items) < 3:
        raise InvalidInputError("need at least three videos to form tiers")
    ids = [vid for vid, _ in items]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("video ids must be unique")
    if not all(math.isfinite(d) for _, d in items):
        raise InvalidInputError("dynamic degrees must be finite")
    ordered = sorted(items, key=lambda it: (it[1], it[0]))
    n = len(ordered)
    low, mid = math.ceil(n / 3), math.ceil(2 * n / 3)
    tiers = {}
    for rank, (vid, _) in enumerate(ordered, start=1):
        tiers[vid] = TIERS[0] if rank <= low else TIERS[1] if rank <= mid else TIERS[2]
    return tiers
