import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from mvlip.model import LipReader, ModelConfig

# wall-clock deadlines are meaningless under a loaded CI box
settings.register_profile("no-deadline", deadline=None)
settings.load_profile("no-deadline")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in rep.nodeid:
                name = rep.nodeid.split("::")[-1]
                lines.append((name, outcome))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, outcome in sorted(lines):
            terminalreporter.write_line(
                f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}"
            )


def tiny_config(views=(0, 90), scorer="location_aware"):
    return ModelConfig(
        views=views,
        scorer=scorer,
        conv_channels=(2, 3),
        cell_size=4,
        att_dim=3,
        emb_dim=2,
        loc_kernel=3,
        loc_filters=2,
        dropout=0.0,
    )


@pytest.fixture
def tiny_model():
    torch.manual_seed(42)
    model = LipReader(tiny_config())
    model.eval()
    return model


@pytest.fixture
def tiny_frames():
    rng = np.random.default_rng(42)
    return {
        0: rng.random((3, 8, 8, 1)).astype(np.float32),
        90: rng.random((3, 8, 8, 1)).astype(np.float32),
    }
