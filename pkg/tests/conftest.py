import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import settings

from adasiam.sequence_io import Frame, SyntheticConfig, generate_synthetic

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


def shipped_config(name: str) -> dict:
    with (resources.files("adasiam") / "data" / f"{name}.json").open(encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def shipped_sequences():
    """The three shipped synthetic sequences at the committed seed."""
    names = ["slow_pan", "appearance_switch", "drift_occlusion"]
    return {n: generate_synthetic(SyntheticConfig.from_dict(shipped_config(n)), 7) for n in names}


def textured_frame(h=96, w=128, seed=0, index=0, channels=1) -> Frame:
    rng = np.random.default_rng(seed)
    from scipy import ndimage

    img = ndimage.gaussian_filter(rng.random((h, w, channels)), (1.5, 1.5, 0))
    img = (img - img.min()) / (img.max() - img.min())
    return Frame(index, img)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
