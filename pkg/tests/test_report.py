import numpy as np
import pytest

from mvlip.analysis import FrameImportance, view_importance
from mvlip.attention import AttentionTrace
from mvlip.dataio import FrameAlignment
from mvlip.metrics import evaluate_pairs
from mvlip.report import (
    save_confusion_figure,
    save_frame_importance_figure,
    save_training_curve,
    save_view_importance_figure,
)
from mvlip.train import EpochStats


def test_confusion_figure(tmp_path):
    report = evaluate_pairs([(["A", "B"], ["A", "A"]), (["V1"], ["V1"])])
    for normalized in (True, False):
        out = tmp_path / f"conf_{normalized}.png"
        save_confusion_figure(report, out, normalized=normalized)
        assert out.stat().st_size > 0


def test_frame_importance_figure(tmp_path):
    imp = FrameImportance("c1", np.array([0.2, 1.0, 0.5]), np.array([0.2, 1.0, 0.5]))
    ali = FrameAlignment("c1", ["A", "B", "B"], [2])
    out = tmp_path / "imp.png"
    save_frame_importance_figure(imp, [1], out, ali)
    assert out.stat().st_size > 0


def test_view_importance_figure(tmp_path):
    trace = AttentionTrace(clip_id="c", angles=[0, 90])
    trace.append_step({0: np.array([1.0]), 90: np.array([1.0])},
                      np.array([0.7, 0.3]), np.zeros(2))
    table = view_importance([(trace, ["A"])])
    out = tmp_path / "views.png"
    save_view_importance_figure(table, out)
    assert out.stat().st_size > 0


def test_view_importance_figure_empty_rejected(tmp_path):
    from mvlip.analysis import ViewImportanceTable
    with pytest.raises(ValueError):
        save_view_importance_figure(ViewImportanceTable(angles=[0]), tmp_path / "x.png")


def test_training_curve(tmp_path):
    hist = [EpochStats(1, 3.0, 0.9), EpochStats(2, 2.0, 0.5), EpochStats(3, 1.5, None)]
    out = tmp_path / "curve.png"
    save_training_curve(hist, out)
    assert out.stat().st_size > 0
