from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stenoforge.synthetic import notch_profile, straight_vessel  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def healthy_vessel():
    return straight_vessel(n=65, diam_px=30.0, spacing_mm_per_px=0.1)


@pytest.fixture
def half_notch_vessel():
    """Straight 3.0 mm vessel with a 50 %DS notch at sample 32."""
    diam = np.full(65, 30.0)
    diam[29:36] = 30.0 * (1 - 0.5 * np.exp(-0.5 * ((np.arange(29, 36) - 32) / 1.5) ** 2))
    return straight_vessel(n=65, diam_px=diam, spacing_mm_per_px=0.1)


@pytest.fixture
def sixty_notch_vessel():
    return straight_vessel(n=65, diam_px=notch_profile(65, 30.0, depth=0.6, center=32, width=2.0))


def write_dataset(root: Path, size: int = 256) -> Path:
    """Four straight vessels with one notch each (three moderate, one severe) and a manifest."""
    import json

    from stenoforge.geometry import save_geometry

    root.mkdir(parents=True, exist_ok=True)
    images = []
    for k, depth in enumerate((0.6, 0.55, 0.65, 0.8)):
        diam = notch_profile(65, 16.0, 14.0, depth=depth, center=30 + k, width=2.0)
        g = straight_vessel(
            n=65, diam_px=diam, start=(30.0, 60.0 + 40.0 * k), step_px=3.0, image_size=(size, size)
        )
        save_geometry(g, root / f"v{k}.json")
        images.append({"id": f"v{k}", "geometry": f"v{k}.json", "lesions": [{"id": f"v{k}-0", "mld_index": 30 + k}]})
    path = root / "manifest.json"
    path.write_text(json.dumps({"images": images}))
    return path


@pytest.fixture
def dataset_manifest(tmp_path) -> Path:
    return write_dataset(tmp_path / "data")


_VERDICTS_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record and assert one acceptance criterion; lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_VERDICTS_KEY, [])

    def record(num: int, name: str, ok: bool | None, detail: str) -> None:
        status = {True: "PASS", False: "FAIL", None: "NOT REPRODUCIBLE"}[ok]
        line = f"criterion {num} [{name}]: {status} ({detail})"
        lines.append(line)
        print(line)
        assert ok is not False, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
