import numpy as np
import pytest

from conftest import gray_image, texture
from scenecraft.errors import InvalidInputError
from scenecraft.metrics.flow import FlowParams, farneback_flow, poly_expansion, to_gray

SHIFTS = [(3, 0), (0, -2), (2, 2)]


def shifted_pair(dx, dy, size=128, seed=0):
    base = texture(size, sigma=2.0, seed=seed)
    return gray_image(base), gray_image(np.roll(base, (dy, dx), axis=(0, 1)))


def central(arr, frac=0.8):
    h, w = arr.shape
    my, mx = int(round(h * (1 - frac) / 2)), int(round(w * (1 - frac) / 2))
    return arr[my:h - my, mx:w - mx]


def endpoint_error(field, dx, dy):
    return float(central(np.hypot(field.u - dx, field.v - dy)).mean())


@pytest.mark.parametrize("dx,dy", SHIFTS)
def test_recovers_known_shift(dx, dy):
    a, b = shifted_pair(dx, dy)
    field = farneback_flow(a, b)
    assert endpoint_error(field, dx, dy) < 0.25


def test_zero_motion():
    a, _ = shifted_pair(0, 0)
    field = farneback_flow(a, a)
    assert float(field.magnitude().mean()) < 0.05


def test_uniform_images_give_zero_flow():
    flat = gray_image(np.full((32, 32), 90.0))
    field = farneback_flow(flat, flat)
    assert np.abs(field.u).max() < 1e-6 and np.abs(field.v).max() < 1e-6


@pytest.mark.parametrize("dx,dy", SHIFTS)
def test_agrees_with_opencv(dx, dy):
    cv2 = pytest.importorskip("cv2")
    a, b = shifted_pair(dx, dy, seed=3)
    p = FlowParams()
    ours = farneback_flow(a, b, p)
    ga = np.rint(to_gray(a)).astype(np.uint8)
    gb = np.rint(to_gray(b)).astype(np.uint8)
    ref = cv2.calcOpticalFlowFarneback(ga, gb, None, p.pyramid_scale, p.pyramid_levels, p.window_size,
                                       p.iterations, p.poly_n, p.poly_sigma, 0)
    diff = np.hypot(ours.u - ref[..., 0], ours.v - ref[..., 1])
    assert float(central(diff).mean()) < 0.1
    assert endpoint_error(ours, dx, dy) <= max(0.25, 2 * float(central(np.hypot(ref[..., 0] - dx, ref[..., 1] - dy)).mean()))


def test_poly_expansion_recovers_a_quadratic():
    # f = 2x^2 + 0.5xy - y^2 + 3x - 4y + 7 is represented exactly
    y, x = np.mgrid[0:41, 0:41].astype(float)
    cx, cy = 20, 20
    X, Y = x - cx, y - cy
    f = 2 * X**2 + 0.5 * X * Y - Y**2 + 3 * X - 4 * Y + 7
    bx, by, axx, ayy, axy = poly_expansion(f, 5, 1.1)[cy, cx]
    assert (bx, by) == pytest.approx((3, -4), abs=1e-8)
    assert (axx, ayy, axy) == pytest.approx((2, -1, 0.25), abs=1e-8)


def test_input_checks():
    a = gray_image(texture(16))
    with pytest.raises(InvalidInputError):
        farneback_flow(a, gray_image(texture(20)))
    with pytest.raises(InvalidInputError):
        farneback_flow(a, a, FlowParams(window_size=31))
    with pytest.raises(InvalidInputError):
        FlowParams(pyramid_scale=1.5)
    with pytest.raises(InvalidInputError):
        FlowParams(iterations=0)


def test_params_round_trip():
    p = FlowParams(pyramid_levels=2, window_size=9)
    assert FlowParams.from_dict(p.to_dict()) == p
    assert FlowParams.from_dict(None) == FlowParams()
