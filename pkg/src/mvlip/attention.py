"""View-temporal attention: per-view temporal scorers plus multi-view fusion.

Temporal attention comes in three flavors (additive, multiplicative,
location-aware); each configured camera angle gets its own scorer instance.
View fusion always uses the additive form with the decoder state as query
and recomputes the view weights at every decoding step. The CTC branch
bypasses attention entirely and consumes a plain feature concatenation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

SCORER_KINDS = ("additive", "multiplicative", "location_aware")


class AdditiveScorer(nn.Module):
    """score_t = v . tanh(Wq q + Wk k_t)"""

    def __init__(self, query_dim: int, key_dim: int, att_dim: int):
        super().__init__()
        self.query_proj = nn.Linear(query_dim, att_dim, bias=False)
        self.key_proj = nn.Linear(key_dim, att_dim, bias=True)
        self.energy = nn.Linear(att_dim, 1, bias=False)

    def forward(self, query, keys, prev_weights=None):
        return self.energy(torch.tanh(self.query_proj(query) + self.key_proj(keys))).squeeze(-1)


class MultiplicativeScorer(nn.Module):
    """score_t = q . (W k_t)"""

    def __init__(self, query_dim: int, key_dim: int, att_dim: int = 0):
        super().__init__()
        self.key_proj = nn.Linear(key_dim, query_dim, bias=False)

    def forward(self, query, keys, prev_weights=None):
        return self.key_proj(keys) @ query


class LocationAwareScorer(nn.Module):
    """Additive scorer plus a convolutional feature of the previous weights."""

    def __init__(self, query_dim: int, key_dim: int, att_dim: int,
                 kernel_size: int = 11, num_filters: int = 8):
        super().__init__()
        self.query_proj = nn.Linear(query_dim, att_dim, bias=False)
        self.key_proj = nn.Linear(key_dim, att_dim, bias=True)
        self.loc_conv = nn.Conv1d(1, num_filters, kernel_size,
                                  padding=kernel_size // 2, bias=False)
        self.loc_proj = nn.Linear(num_filters, att_dim, bias=False)
        self.energy = nn.Linear(att_dim, 1, bias=False)

    def forward(self, query, keys, prev_weights=None):
        if prev_weights is None:
            raise ValueError("location-aware scorer needs previous weights "
                             "(pass uniform weights at the first step)")
        loc = self.loc_conv(prev_weights.view(1, 1, -1)).squeeze(0).transpose(0, 1)  # T x F
        hidden = self.query_proj(query) + self.key_proj(keys) + self.loc_proj(loc)
        return self.energy(torch.tanh(hidden)).squeeze(-1)


def make_scorer(kind: str, query_dim: int, key_dim: int, att_dim: int,
                loc_kernel: int = 11, loc_filters: int = 8) -> nn.Module:
    if kind == "additive":
        return AdditiveScorer(query_dim, key_dim, att_dim)
    if kind == "multiplicative":
        return MultiplicativeScorer(query_dim, key_dim)
    if kind == "location_aware":
        return LocationAwareScorer(query_dim, key_dim, att_dim, loc_kernel, loc_filters)
    raise ValueError(f"unknown scorer kind {kind!r}; choose from {SCORER_KINDS}")


class TemporalAttention(nn.Module):
    """Attention over the frames of one view.

    forward(query, keys, prev_weights) -> (weights, context) where weights is
    a length-T simplex vector and context = sum_t weights[t] * keys[t].
    """

    def __init__(self, kind: str, query_dim: int, key_dim: int, att_dim: int = 128,
                 loc_kernel: int = 11, loc_filters: int = 8):
        super().__init__()
        self.kind = kind
        self.scorer = make_scorer(kind, query_dim, key_dim, att_dim, loc_kernel, loc_filters)

    def forward(self, query: torch.Tensor, keys: torch.Tensor,
                prev_weights: Optional[torch.Tensor] = None):
        if keys.ndim != 2 or keys.shape[0] == 0:
            raise ValueError("keys must be a non-empty T x D matrix")
        scores = self.scorer(query, keys, prev_weights)
        weights = torch.softmax(scores, dim=0)
        context = weights @ keys
        return weights, context


class ViewFusion(nn.Module):
    """Per-step weighted combination of the per-view context vectors."""

    def __init__(self, query_dim: int, context_dim: int, att_dim: int = 128):
        super().__init__()
        self.scorer = AdditiveScorer(query_dim, context_dim, att_dim)

    def forward(self, contexts: Dict[int, torch.Tensor], query: torch.Tensor):
        """contexts: angle -> context vector. Returns (angles, weights, fused)."""
        if not contexts:
            raise ValueError("no view contexts to fuse")
        angles = sorted(contexts)
        stacked = torch.stack([contexts[a] for a in angles])  # V x D
        scores = self.scorer(query, stacked)
        weights = torch.softmax(scores, dim=0)
        fused = weights @ stacked
        return angles, weights, fused


def concat_views(features: Dict[int, torch.Tensor]) -> torch.Tensor:
    """Concatenate per-view T x D features to T x (V*D), sorted by angle."""
    if not features:
        raise ValueError("no view features to concatenate")
    angles = sorted(features)
    lengths = {a: features[a].shape[0] for a in angles}
    if len(set(lengths.values())) != 1:
        raise ValueError(f"views disagree on frame count: {lengths}")
    return torch.cat([features[a] for a in angles], dim=1)


@dataclass
class AttentionTrace:
    """Attention weights recorded along one decoding path.

    temporal[u][v] is the weight vector over frames for decoding step u and
    view index v (in `angles` order); view_weights[u] is the per-step fusion
    simplex over views; contexts[u] the fused context vector.
    """

    clip_id: str
    angles: List[int]
    temporal: List[List[np.ndarray]] = field(default_factory=list)
    view_weights: List[np.ndarray] = field(default_factory=list)
    contexts: List[np.ndarray] = field(default_factory=list)

    @property
    def num_steps(self) -> int:
        return len(self.view_weights)

    @property
    def num_frames(self) -> int:
        return len(self.temporal[0][0]) if self.temporal else 0

    def append_step(self, temporal: Dict[int, np.ndarray],
                    view_weights: np.ndarray, context: np.ndarray) -> None:
        self.temporal.append([np.asarray(temporal[a], dtype=np.float64) for a in self.angles])
        self.view_weights.append(np.asarray(view_weights, dtype=np.float64))
        self.contexts.append(np.asarray(context, dtype=np.float64))

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "view_order": list(self.angles),
            "temporal": [[w.tolist() for w in step] for step in self.temporal],
            "view": [w.tolist() for w in self.view_weights],
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, obj: dict) -> "AttentionTrace":
        trace = cls(clip_id=obj.get("clip_id", ""), angles=list(obj["view_order"]))
        trace.temporal = [
            [np.asarray(w, dtype=np.float64) for w in step] for step in obj["temporal"]
        ]
        trace.view_weights = [np.asarray(w, dtype=np.float64) for w in obj["view"]]
        return trace

    @classmethod
    def load_json(cls, path: str | Path) -> "AttentionTrace":
        return cls.from_dict(json.loads(Path(path).read_text()))
