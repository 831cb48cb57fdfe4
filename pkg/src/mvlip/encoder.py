"""Per-view spatiotemporal encoder: frame-wise conv stack + bidirectional LSTM.

Temporal stride is fixed to 1 so every input frame keeps its own feature
vector; downstream frame-importance analysis relies on that one-to-one
mapping between attention weights and video frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import torch
from torch import nn


@dataclass
class EncoderConfig:
    views: Tuple[int, ...] = (0, 30, 45, 60, 90)
    conv_channels: Tuple[int, ...] = (16, 32, 64, 96)
    in_channels: int = 1
    cell_size: int = 256
    dropout: float = 0.1

    @property
    def conv_dim(self) -> int:
        return self.conv_channels[-1]

    @property
    def feature_dim(self) -> int:
        return 2 * self.cell_size  # bidirectional


class ViewEncoder(nn.Module):
    """Encoder for a single camera angle (each view owns its parameters)."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        layers: List[nn.Module] = []
        in_ch = cfg.in_channels
        for out_ch in cfg.conv_channels:
            layers += [
                nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(2, ceil_mode=True),
            ]
            in_ch = out_ch
        self.conv = nn.Sequential(*layers)
        self.dropout = nn.Dropout(cfg.dropout)
        self.rnn = nn.LSTM(
            cfg.conv_dim, cfg.cell_size, batch_first=True, bidirectional=True
        )
        self._init_weights()

    def _init_weights(self):
        for m in self.conv.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)

    def conv_features(self, frames: torch.Tensor) -> torch.Tensor:
        """T x C x H x W -> T x conv_dim via the conv stack + global average."""
        if frames.ndim != 4:
            raise ValueError(f"expected T x C x H x W frames, got shape {tuple(frames.shape)}")
        if frames.shape[1] != self.cfg.in_channels:
            raise ValueError(
                f"expected {self.cfg.in_channels} input channels, got {frames.shape[1]}"
            )
        z = self.conv(frames * 2.0 - 1.0)  # center [0,1] pixels at zero
        return z.mean(dim=(2, 3))

    def forward(self, frames: torch.Tensor):
        """Returns (h: T x 2*cell, f: T x conv_dim, final (h_n, c_n))."""
        f = self.conv_features(frames)
        h, state = self.rnn(self.dropout(f).unsqueeze(0))
        return h.squeeze(0), f, state


@dataclass
class EncoderOutput:
    """Per-view feature sequences; all views share the frame count T."""

    features: Dict[int, torch.Tensor]  # angle -> T x 2*cell
    conv: Dict[int, torch.Tensor]  # angle -> T x conv_dim
    states: Dict[int, tuple]
    warnings: List[str] = field(default_factory=list)

    @property
    def angles(self) -> List[int]:
        return sorted(self.features)

    @property
    def num_frames(self) -> int:
        return next(iter(self.features.values())).shape[0]


class MultiViewEncoder(nn.Module):
    """One independent ViewEncoder per configured camera angle."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.views = nn.ModuleDict({str(v): ViewEncoder(cfg) for v in sorted(cfg.views)})

    def encode_view(self, frames: torch.Tensor, angle: int) -> torch.Tensor:
        if str(angle) not in self.views:
            raise KeyError(f"view {angle} not in configured views {self.cfg.views}")
        h, _, _ = self.views[str(angle)](frames)
        return h

    def forward(self, view_frames: Dict[int, torch.Tensor]) -> EncoderOutput:
        """Encode every present view; missing configured views are reported."""
        if not view_frames:
            raise ValueError("no views present in input")
        unknown = [v for v in view_frames if str(v) not in self.views]
        if unknown:
            raise KeyError(f"views {unknown} not in configured views {self.cfg.views}")
        lengths = {v: fr.shape[0] for v, fr in view_frames.items()}
        if len(set(lengths.values())) != 1:
            raise ValueError(f"views disagree on frame count: {lengths}")
        out = EncoderOutput(features={}, conv={}, states={})
        for angle in sorted(view_frames):
            h, f, state = self.views[str(angle)](view_frames[angle])
            out.features[angle] = h
            out.conv[angle] = f
            out.states[angle] = state
        missing = sorted(v for v in self.cfg.views if v not in view_frames)
        if missing:
            out.warnings.append(f"configured views missing from input: {missing}")
        return out


def frames_to_tensor(frames, dtype=torch.float32) -> torch.Tensor:
    """numpy T x H x W x C in [0,1] -> torch T x C x H x W."""
    t = torch.as_tensor(frames, dtype=dtype)
    if t.ndim != 4:
        raise ValueError(f"expected T x H x W x C array, got shape {tuple(t.shape)}")
    return t.permute(0, 3, 1, 2).contiguous()
