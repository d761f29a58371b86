"""Two-frame dense optical flow by polynomial expansion (Farneback).

Each frame is locally approximated by a quadratic ``x'Ax + b'x + c`` fitted
with Gaussian weights. If the second frame is the first displaced by ``d``,
then ``b2 = b1 - 2 A d``, which gives a linear system for ``d`` per pixel.
The system is pooled over a Gaussian window, refined iteratively and run
coarse to fine over an image pyramid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import InvalidInputError
from ..media import Image

# determinant regulariser; keeps textureless regions at zero displacement
DET_EPS = 1e-3
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window_size: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if int(self.pyramid_levels) < 1:
            raise InvalidInputError("pyramid_levels must be >= 1")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise InvalidInputError("pyramid_scale must lie in (0, 1)")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise InvalidInputError("window_size must be a positive odd integer")
        if int(self.iterations) < 1:
            raise InvalidInputError("iterations must be >= 1")
        if self.poly_n < 1 or self.poly_n % 2 == 0:
            raise InvalidInputError("poly_n must be a positive odd integer")
        if not self.poly_sigma > 0:
            raise InvalidInputError("poly_sigma must be > 0")

    @classmethod
    def from_dict(cls, data: dict | None) -> "FlowParams":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown flow parameters: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray
    v: np.ndarray

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def to_gray(image) -> np.ndarray:
    """Luminance in [0, 255] as float64; accepts an Image or an array."""
    px = image.pixels if isinstance(image, Image) else np.asarray(image)
    if px.ndim == 3:
        return px.astype(np.float64) @ LUMA
    if px.ndim == 2:
        return px.astype(np.float64)
    raise InvalidInputError(f"expected an image, got array of shape {px.shape}")


def _gaussian_taps(radius: int, sigma: float) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _window_sigma(window: int) -> float:
    # same default as a Gaussian kernel of this size in common imaging libraries
    return 0.3 * ((window - 1) * 0.5 - 1) + 0.8


def poly_expansion(gray: np.ndarray, poly_n: int, poly_sigma: float) -> np.ndarray:
    """Per-pixel quadratic fit; returns (H, W, 5) as (bx, by, axx, ayy, axy).

    ``axy`` is the off-diagonal entry of A, i.e. half the xy coefficient.
    The constant term is not needed for displacement and is dropped.
    """
    n = poly_n
    g = _gaussian_taps(n, poly_sigma)
    x = np.arange(-n, n + 1, dtype=np.float64)
    k0, k1, k2 = g, g * x, g * x * x

    # Gram matrix of the basis (1, x, y, x^2, y^2, xy) under the weights
    X, Y = np.meshgrid(x, x)
    W = np.outer(g, g)
    basis = np.stack([np.ones_like(X), X, Y, X * X, Y * Y, X * Y]).reshape(6, -1)
    G = (basis * W.ravel()) @ basis.T
    Ginv = np.linalg.inv(G)

    def corr(img, ky, kx):
        tmp = ndimage.correlate1d(img, ky, axis=0, mode="reflect")
        return ndimage.correlate1d(tmp, kx, axis=1, mode="reflect")

    # weighted inner products with each basis function (x runs along columns)
    proj = np.stack(
        [
            corr(gray, k0, k0),
            corr(gray, k0, k1),
            corr(gray, k1, k0),
            corr(gray, k0, k2),
            corr(gray, k2, k0),
            corr(gray, k1, k1),
        ],
        axis=-1,
    )
    r = proj @ Ginv.T
    return np.stack([r[..., 1], r[..., 2], r[..., 3], r[..., 4], 0.5 * r[..., 5]], axis=-1)


def _sample(arr: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup of every channel of ``arr`` at (ys, xs), edge-clamped."""
    coords = np.stack([ys.ravel(), xs.ravel()])
    out = np.empty(ys.shape + arr.shape[2:], dtype=np.float64)
    for c in range(arr.shape[2]):
        out[..., c] = ndimage.map_coordinates(arr[..., c], coords, order=1, mode="nearest").reshape(ys.shape)
    return out


def _refine(R1: np.ndarray, R2: np.ndarray, flow: np.ndarray, window: int, iterations: int) -> np.ndarray:
    h, w = R1.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    radius = window // 2
    taps = _gaussian_taps(radius, _window_sigma(window))
    for _ in range(iterations):
        dx, dy = flow[..., 0], flow[..., 1]
        R2w = _sample(R2, yy + dy, xx + dx)
        b1x, b1y = R1[..., 0], R1[..., 1]
        b2x, b2y = R2w[..., 0], R2w[..., 1]
        a11 = 0.5 * (R1[..., 2] + R2w[..., 2])
        a22 = 0.5 * (R1[..., 3] + R2w[..., 3])
        a12 = 0.5 * (R1[..., 4] + R2w[..., 4])
        db_x = -0.5 * (b2x - b1x) + a11 * dx + a12 * dy
        db_y = -0.5 * (b2y - b1y) + a12 * dx + a22 * dy

        # normal equations A'A d = A'db, pooled over the window
        terms = np.stack(
            [
                a11 * a11 + a12 * a12,
                a12 * (a11 + a22),
                a22 * a22 + a12 * a12,
                a11 * db_x + a12 * db_y,
                a12 * db_x + a22 * db_y,
            ],
            axis=-1,
        )
        terms = ndimage.correlate1d(terms, taps, axis=0, mode="nearest")
        terms = ndimage.correlate1d(terms, taps, axis=1, mode="nearest")
        g11, g12, g22, h1, h2 = np.moveaxis(terms, -1, 0)
        idet = 1.0 / (g11 * g22 - g12 * g12 + DET_EPS)
        flow = np.stack([(g22 * h1 - g12 * h2) * idet, (g11 * h2 - g12 * h1) * idet], axis=-1)
    return flow


def _pyramid(gray: np.ndarray, levels: int, scale: float, min_side: int) -> list[np.ndarray]:
    out = [gray]
    sigma = (1.0 / scale - 1.0) * 0.5
    for _ in range(1, levels):
        prev = out[-1]
        shape = tuple(max(1, int(round(s * scale))) for s in prev.shape)
        if min(shape) < min_side:
            break
        blurred = ndimage.gaussian_filter(prev, sigma, mode="reflect")
        out.append(ndimage.zoom(blurred, (shape[0] / prev.shape[0], shape[1] / prev.shape[1]), order=1))
    return out


def _upsample_flow(flow: np.ndarray, shape) -> np.ndarray:
    fy, fx = shape[0] / flow.shape[0], shape[1] / flow.shape[1]
    u = ndimage.zoom(flow[..., 0], (fy, fx), order=1, grid_mode=True, mode="nearest") * fx
    v = ndimage.zoom(flow[..., 1], (fy, fx), order=1, grid_mode=True, mode="nearest") * fy
    return np.stack([u[: shape[0], : shape[1]], v[: shape[0], : shape[1]]], axis=-1)


def farneback_flow(a, b, p: FlowParams | None = None) -> FlowField:
    """Dense flow from ``a`` to ``b``: ``b(x + d(x)) ~ a(x)``."""
    p = p or FlowParams()
    ga, gb = to_gray(a), to_gray(b)
    if ga.shape != gb.shape:
        raise InvalidInputError(f"frame size mismatch: {ga.shape} vs {gb.shape}")
    if p.window_size > min(ga.shape):
        raise InvalidInputError(f"window {p.window_size} larger than image {ga.shape[1]}x{ga.shape[0]}")
    min_side = 2 * p.poly_n + 1
    pa = _pyramid(ga, p.pyramid_levels, p.pyramid_scale, min_side)
    pb = _pyramid(gb, len(pa), p.pyramid_scale, min_side)

    flow = None
    for la, lb in zip(reversed(pa), reversed(pb)):
        if flow is None:
            flow = np.zeros(la.shape + (2,))
        else:
            flow = _upsample_flow(flow, la.shape)
        R1 = poly_expansion(la, p.poly_n, p.poly_sigma)
        R2 = poly_expansion(lb, p.poly_n, p.poly_sigma)
        # coarse levels can be narrower than the window; shrink it to the largest odd fit
        window = min(p.window_size, (min(la.shape) - 1) | 1)
        flow = _refine(R1, R2, flow, window, p.iterations)
    return FlowField(flow[..., 0], flow[..., 1])
