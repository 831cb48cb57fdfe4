"""Attention-driven per-frame downscaling and a matched uniform baseline.

Frame t is downscaled to round(h/2 * (1 + a_cum[t])) pixels per side, so
importance 1 keeps full resolution and importance 0 halves each side. Size
accounting uses raw pixel counts (no codec model); degraded frames are
upscaled back to the original canvas for fair side-by-side playback.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .analysis import FrameImportance


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class FramePlan:
    a_cum: float | None  # None for uniform-mode plans
    height: int
    width: int
    target_height: int
    target_width: int


@dataclass
class CompressionPlan:
    clip_id: str
    mode: str  # "attention" | "uniform"
    frames: List[FramePlan] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "mode": self.mode,
            "frames": [
                {
                    "a_cum": fp.a_cum,
                    "height": fp.height,
                    "width": fp.width,
                    "target_height": fp.target_height,
                    "target_width": fp.target_width,
                }
                for fp in self.frames
            ],
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load_json(cls, path: str | Path) -> "CompressionPlan":
        obj = json.loads(Path(path).read_text())
        plan = cls(clip_id=obj["clip_id"], mode=obj["mode"])
        plan.frames = [
            FramePlan(f["a_cum"], f["height"], f["width"],
                      f["target_height"], f["target_width"])
            for f in obj["frames"]
        ]
        return plan


def plan(importance: FrameImportance, dims: Tuple[int, int]) -> CompressionPlan:
    """Per-frame target resolutions from normalized attention mass."""
    h, w = dims
    out = CompressionPlan(clip_id=importance.clip_id, mode="attention")
    for a in importance.normalized:
        a = float(a)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"a_cum {a} outside [0, 1]")
        out.frames.append(
            FramePlan(
                a_cum=a,
                height=h,
                width=w,
                target_height=round_half_up(h / 2 * (1 + a)),
                target_width=round_half_up(w / 2 * (1 + a)),
            )
        )
    return out


def compression_factor(p: CompressionPlan) -> float:
    """Fraction of pixels removed relative to the original frames."""
    original = sum(fp.height * fp.width for fp in p.frames)
    kept = sum(fp.target_height * fp.target_width for fp in p.frames)
    return 1.0 - kept / original if original else 0.0


def bilinear_resize(image: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Plain bilinear resampling (half-pixel centers, edge clamp).

    Self-contained so recorded golden images stay portable across library
    versions; constant images are exactly invariant.
    """
    h_src, w_src = image.shape[:2]
    h_dst, w_dst = size
    if (h_dst, w_dst) == (h_src, w_src):
        return image.copy()
    ys = (np.arange(h_dst) + 0.5) * (h_src / h_dst) - 0.5
    xs = (np.arange(w_dst) + 0.5) * (w_src / w_dst) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h_src - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w_src - 1)
    y1 = np.clip(y0 + 1, 0, h_src - 1)
    x1 = np.clip(x0 + 1, 0, w_src - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    img = image if image.ndim == 3 else image[..., None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out if image.ndim == 3 else out[..., 0]


def apply_plan(frames: np.ndarray, p: CompressionPlan) -> np.ndarray:
    """Downscale each frame to its target, then back to the original canvas.

    Frames whose target equals the original pass through pixel-identically.
    """
    if frames.shape[0] != len(p.frames):
        raise ValueError(
            f"plan covers {len(p.frames)} frames, clip has {frames.shape[0]}"
        )
    out = np.empty_like(frames)
    for t, fp in enumerate(p.frames):
        if frames.shape[1] != fp.height or frames.shape[2] != fp.width:
            raise ValueError(
                f"frame {t}: plan dims {(fp.height, fp.width)} != clip dims "
                f"{frames.shape[1:3]}"
            )
        if (fp.target_height, fp.target_width) == (fp.height, fp.width):
            out[t] = frames[t]
        else:
            small = bilinear_resize(frames[t], (fp.target_height, fp.target_width))
            out[t] = bilinear_resize(small, (fp.height, fp.width))
    return out


def uniform_baseline(
    frames: np.ndarray, target_factor: float, clip_id: str = ""
) -> Tuple[np.ndarray, CompressionPlan]:
    """Degrade all frames with one global scale hitting the target factor.

    The scale s satisfies 1 - s^2 == target_factor; factors at or beyond
    0.75 would push below the half-resolution floor and are rejected.
    """
    if not 0.0 <= target_factor < 0.75:
        raise ValueError(
            f"target_factor must be in [0, 0.75) (half-resolution floor), "
            f"got {target_factor}"
        )
    s = math.sqrt(1.0 - target_factor)
    t, h, w = frames.shape[:3]
    # realize s on the integer grid: round the height, then pick the width
    # whose pixel count lands closest to the target (matters at small sizes)
    target_px = s * s * h * w
    h_new = min(max(round_half_up(h * s), 1), h)
    w_floor = min(max(math.floor(w * s), 1), w)
    w_ceil = min(max(math.ceil(w * s), 1), w)
    w_new = min(
        (w_ceil, w_floor), key=lambda wn: (abs(h_new * wn - target_px), wn != w_ceil)
    )
    p = CompressionPlan(clip_id=clip_id, mode="uniform")
    for _ in range(t):
        p.frames.append(
            FramePlan(
                a_cum=None,
                height=h,
                width=w,
                target_height=h_new,
                target_width=w_new,
            )
        )
    return apply_plan(frames, p), p
