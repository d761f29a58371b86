import json
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from scenecraft.backends import BackendSet
from scenecraft.blueprint import parse_blueprint
from scenecraft.media import Clip, Image
from scenecraft.orchestrator import RunConfig, run_pipeline

FIXTURES = Path(__file__).parent / "fixtures"


def texture(size=64, sigma=1.5, seed=0) -> np.ndarray:
    """Band-limited noise in 0..255, a float32 grayscale texture."""
    rng = np.random.default_rng(seed)
    g = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    g = (g - g.min()) / (g.max() - g.min())
    return (g * 255).astype(np.float32)


def gray_image(arr) -> Image:
    a = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return Image(np.repeat(a[..., None], 3, axis=2))


def translation_clip(speed, frames=6, size=64, seed=0, axis=1) -> Clip:
    base = texture(size, seed=seed)
    return Clip(tuple(gray_image(np.roll(base, speed * t, axis=axis)) for t in range(frames)), 24)


def static_clip(frames=6, size=64, seed=0) -> Clip:
    img = gray_image(texture(size, seed=seed))
    return Clip((img,) * frames, 24)


def half_noise_clip(frames=16, size=64, seed=0) -> Clip:
    """Static texture whose right half turns to fresh uniform noise every frame from T//2."""
    rng = np.random.default_rng(seed + 1)
    base = texture(size, seed=seed)
    out = []
    for t in range(frames):
        f = base.copy()
        if t >= frames // 2:
            f[:, size // 2:] = rng.integers(0, 256, (size, size - size // 2))
        out.append(gray_image(f))
    return Clip(tuple(out), 24)


class TableEmbedder:
    """Embedder returning a preset vector per frame, keyed by pixel digest."""

    def __init__(self, table):
        self.table = table

    def embed(self, image, condition=None):
        return np.asarray(self.table[image.pixel_digest()], dtype=np.float64)


def load_fixture_blueprint(name="blueprint_cat.json"):
    return parse_blueprint((FIXTURES / name).read_bytes())


def mock_config(out, prompt="A cat detective story", **kw) -> RunConfig:
    data = {"backends": {"default": {"kind": "mock", "mock_seed": kw.pop("seed", 7)}}, "max_scene_seconds": 2.0}
    data.update(kw)
    return RunConfig.from_dict(data, user_prompt=prompt, output_dir=str(out))


def tree(root: Path) -> dict:
    """rel path -> bytes for every file except the lock."""
    root = Path(root)
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != ".lock"
    }


@pytest.fixture(scope="session")
def cat_blueprint():
    return load_fixture_blueprint()


@pytest.fixture(scope="session")
def mock_backends():
    return BackendSet.mock(seed=7)


@pytest.fixture(scope="session")
def finished_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "cat"
    run_pipeline(mock_config(out))
    return out


def schema_validator(name):
    """A jsonschema validator that resolves refs between the packaged schemas."""
    import jsonschema
    from referencing import Registry, Resource

    from scenecraft.metrics.report import load_schema

    docs = {n: load_schema(n) for n in ("metric_report", "analysis_report")}
    registry = Registry().with_resources(
        (doc["$id"], Resource.from_contents(doc)) for doc in docs.values()
    )
    cls = jsonschema.validators.validator_for(docs[name])
    cls.check_schema(docs[name])
    return cls(docs[name], registry=registry)


def read_json(path):
    return json.loads(Path(path).read_text())


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
