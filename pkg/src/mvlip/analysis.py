"""Speech-perception structure extracted from attention traces.

Cumulative frame importance (per-frame attention mass over decoding steps),
top-fraction frame selection, the viseme content of the selected frames, and
per-viseme view preferences.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .attention import AttentionTrace
from .dataio import FrameAlignment
from .vocab import VISEME_CLASSES

WORD_SEP = ";"


@dataclass
class FrameImportance:
    """Per-frame attention mass, normalized to [0,1] by the clip maximum."""

    clip_id: str
    raw: np.ndarray
    normalized: np.ndarray

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "raw": self.raw.tolist(),
            "normalized": self.normalized.tolist(),
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")


def cumulative_attention(
    trace: AttentionTrace, view_reduction: str = "view_weighted"
) -> FrameImportance:
    """Sum temporal attention over decoding steps into per-frame mass.

    view_reduction "view_weighted" scales each view's temporal vector by the
    step's view-fusion weight (the mass the decoder actually consumed);
    "uniform" averages views equally. Both agree on single-view traces.
    """
    if trace.num_steps == 0:
        raise ValueError("empty attention trace")
    T = trace.num_frames
    raw = np.zeros(T, dtype=np.float64)
    num_views = len(trace.angles)
    for u in range(trace.num_steps):
        for v in range(num_views):
            if view_reduction == "view_weighted":
                coeff = trace.view_weights[u][v]
            elif view_reduction == "uniform":
                coeff = 1.0 / num_views
            else:
                raise ValueError(f"unknown view_reduction {view_reduction!r}")
            raw += coeff * trace.temporal[u][v]
    peak = raw.max()
    normalized = raw / peak if peak > 0 else np.zeros_like(raw)
    return FrameImportance(clip_id=trace.clip_id, raw=raw, normalized=normalized)


def top_frames(importance: FrameImportance, fraction: float = 0.3) -> List[int]:
    """Indices of the ceil(fraction * T) highest-mass frames.

    Ordered by descending raw mass; ties go to the earlier frame.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    T = len(importance.raw)
    k = math.ceil(fraction * T)
    order = sorted(range(T), key=lambda t: (-importance.raw[t], t))
    return order[:k]


def important_visemes(
    top: Sequence[int], alignment: FrameAlignment
) -> List[str]:
    """Viseme content of the selected frames, in temporal order.

    Frames belonging to the same label run collapse to one entry; crossing a
    word boundary inserts a ";" marker (and breaks the run).
    """
    if not top:
        return []
    frames = sorted(top)
    if frames[-1] >= len(alignment.labels) or frames[0] < 0:
        raise IndexError(
            f"frame {frames[-1]} outside alignment of {len(alignment.labels)} frames"
        )
    # run id increments when the label changes or a word starts
    boundaries = set(alignment.word_boundaries)
    run_of = []
    word_of = []
    run = word = 0
    for i, sym in enumerate(alignment.labels):
        if i > 0 and (i in boundaries or sym != alignment.labels[i - 1]):
            run += 1
        if i > 0 and i in boundaries:
            word += 1
        run_of.append(run)
        word_of.append(word)

    out: List[str] = []
    prev_run = prev_word = None
    for f in frames:
        if prev_word is not None and word_of[f] != prev_word:
            out.append(WORD_SEP)
        if run_of[f] != prev_run:
            out.append(alignment.labels[f])
        prev_run, prev_word = run_of[f], word_of[f]
    return out


def format_important_visemes(tokens: Sequence[str]) -> str:
    """Render e.g. ["V2","E",";","V3"] as "{V2, E; V3}" (word-separated)."""
    text = ""
    for tok in tokens:
        if tok == WORD_SEP:
            text += "; "
        else:
            text += ("" if not text or text.endswith("; ") else ", ") + tok
    return "{" + text + "}"


@dataclass
class ViewImportanceTable:
    """Mean view-fusion weight per emitted viseme class, per camera angle."""

    angles: List[int]
    mean_weights: Dict[str, np.ndarray] = field(default_factory=dict)
    step_counts: Dict[str, int] = field(default_factory=dict)
    significant: Dict[str, List[int]] = field(default_factory=dict)
    absent: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "angles": self.angles,
            "mean_weights": {c: w.tolist() for c, w in self.mean_weights.items()},
            "step_counts": self.step_counts,
            "significant": self.significant,
            "absent": self.absent,
        }

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["viseme", "angle", "mean_weight", "significant"])
            for c in sorted(self.mean_weights):
                for v, angle in enumerate(self.angles):
                    writer.writerow([
                        c, angle, f"{self.mean_weights[c][v]:.6f}",
                        1 if angle in self.significant[c] else 0,
                    ])


def view_importance(
    pairs: Sequence[Tuple[AttentionTrace, Sequence[str]]],
    threshold_ratio: float = 0.5,
) -> ViewImportanceTable:
    """Average each step's view weights by the viseme class it emitted.

    A view counts as significant for a class when its mean weight is at
    least `threshold_ratio` of that class's best view. Classes never
    emitted are listed as absent rather than reported as zero.
    """
    if not pairs:
        raise ValueError("no (trace, labels) pairs")
    angles = list(pairs[0][0].angles)
    sums: Dict[str, np.ndarray] = {}
    counts: Dict[str, int] = {}
    for trace, labels in pairs:
        if list(trace.angles) != angles:
            raise ValueError("traces disagree on view order")
        if trace.num_steps != len(labels):
            raise ValueError(
                f"trace has {trace.num_steps} steps but {len(labels)} labels"
            )
        for u, sym in enumerate(labels):
            if sym not in VISEME_CLASSES:
                continue
            sums.setdefault(sym, np.zeros(len(angles)))
            sums[sym] += trace.view_weights[u]
            counts[sym] = counts.get(sym, 0) + 1

    table = ViewImportanceTable(angles=angles)
    for sym, total in sums.items():
        mean = total / counts[sym]
        table.mean_weights[sym] = mean
        table.step_counts[sym] = counts[sym]
        cutoff = threshold_ratio * mean.max()
        table.significant[sym] = [a for a, m in zip(angles, mean) if m >= cutoff]
    table.absent = [c for c in VISEME_CLASSES if c not in sums]
    return table
