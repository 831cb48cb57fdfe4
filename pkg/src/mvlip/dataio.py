"""Dataset manifests, frame containers, alignments, and the synthetic generator.

On-disk formats:
  * frame container: magic ``VLNS``, four little-endian u32 (T, H, W, C),
    then T*H*W*C unsigned bytes row-major; pixels load as float32 in [0, 1]
  * manifest: JSON-lines, one clip per line, paths relative to the manifest
  * alignment: CSV ``frame_index,viseme[,word_boundary_flag]``
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .vocab import VISEME_CLASSES, Vocabulary, build_vocabulary

MAGIC = b"VLNS"
VALID_VIEWS = (0, 30, 45, 60, 90)


class ManifestError(ValueError):
    """Raised for unreadable, malformed, or inconsistent manifest data."""


# ---------------------------------------------------------------------------
# frame container


def save_frames(path: str | Path, frames: np.ndarray) -> None:
    """Write a T x H x W x C float array in [0,1] as 8-bit samples."""
    frames = np.asarray(frames)
    if frames.ndim != 4:
        raise ValueError(f"expected T x H x W x C array, got shape {frames.shape}")
    if frames.min() < 0.0 or frames.max() > 1.0:
        raise ValueError("frame values must lie in [0, 1]")
    q = np.floor(frames * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4I", *frames.shape))
        fh.write(q.tobytes(order="C"))


def load_frames(path: str | Path) -> np.ndarray:
    """Read a frame container back as float32 in [0, 1]."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a frame container (bad magic)")
    t, h, w, c = struct.unpack("<4I", raw[4:20])
    data = np.frombuffer(raw, dtype=np.uint8, offset=20)
    if data.size != t * h * w * c:
        raise ValueError(f"{path}: truncated frame container")
    return (data.reshape(t, h, w, c).astype(np.float32)) / 255.0


def export_frames_png(out_dir: str | Path, frames: np.ndarray, fps: float = 8.0) -> None:
    """Dump frames as frame_0000.png ... plus a meta.json index (for the UI)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    q = np.floor(np.asarray(frames) * 255.0 + 0.5).astype(np.uint8)
    for i, frame in enumerate(q):
        img = frame[:, :, 0] if frame.shape[-1] == 1 else frame
        Image.fromarray(img).save(out / f"frame_{i:04d}.png")
    meta = {"count": int(frames.shape[0]), "height": int(frames.shape[1]),
            "width": int(frames.shape[2]), "fps": fps}
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# clips, alignments, manifests


@dataclass
class MultiViewClip:
    """Synchronized lip-crop frame sequences for up to five camera angles."""

    clip_id: str
    views: Dict[int, np.ndarray]  # angle -> T x H x W x C, float in [0,1]
    transcript: List[str]

    def __post_init__(self):
        if not self.views:
            raise ValueError(f"clip {self.clip_id}: no views")
        shapes = {v: a.shape for v, a in self.views.items()}
        if len(set(shapes.values())) != 1:
            raise ValueError(f"clip {self.clip_id}: view shapes differ: {shapes}")

    @property
    def num_frames(self) -> int:
        return next(iter(self.views.values())).shape[0]

    @property
    def angles(self) -> List[int]:
        return sorted(self.views)


@dataclass
class FrameAlignment:
    """Per-frame viseme labels, optionally with word-start frame indices."""

    clip_id: str
    labels: List[str]
    word_boundaries: List[int] = field(default_factory=list)

    def words(self) -> List[List[str]]:
        """Split per-frame labels at the word-boundary frames."""
        cuts = [0] + [b for b in self.word_boundaries if 0 < b < len(self.labels)]
        cuts.append(len(self.labels))
        return [self.labels[a:b] for a, b in zip(cuts, cuts[1:])]


def load_alignment(
    path: str | Path,
    expected_frames: Optional[int] = None,
    vocab: Optional[Vocabulary] = None,
) -> FrameAlignment:
    vocab = vocab or build_vocabulary()
    labels: List[str] = []
    boundaries: List[int] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: expected 2-3 fields, got {len(parts)}")
        idx = int(parts[0])
        if idx != len(labels):
            raise ValueError(f"{path}:{lineno}: frame index {idx} out of order")
        symbol = parts[1].strip()
        if symbol not in vocab.viseme_classes:
            raise ValueError(f"{path}:{lineno}: unknown viseme {symbol!r}")
        labels.append(symbol)
        if len(parts) == 3 and parts[2].strip() == "1":
            boundaries.append(idx)
    if expected_frames is not None and len(labels) != expected_frames:
        raise ValueError(
            f"{path}: alignment has {len(labels)} frames, clip has {expected_frames}"
        )
    return FrameAlignment(clip_id=Path(path).stem, labels=labels, word_boundaries=boundaries)


def save_alignment(path: str | Path, alignment: FrameAlignment) -> None:
    lines = []
    bset = set(alignment.word_boundaries)
    for i, sym in enumerate(alignment.labels):
        lines.append(f"{i},{sym},{1 if i in bset else 0}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ManifestRecord:
    clip_id: str
    views: Dict[int, str]  # angle -> relative path
    transcript: List[str]
    alignment: Optional[str] = None
    split: str = "train"

    def to_json(self) -> str:
        obj = {
            "alignment": self.alignment,
            "clip_id": self.clip_id,
            "split": self.split,
            "transcript": self.transcript,
            "views": {str(k): v for k, v in sorted(self.views.items())},
        }
        return json.dumps(obj, sort_keys=True)


@dataclass
class DatasetManifest:
    records: List[ManifestRecord]
    root: Path

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest(
            records=[r for r in self.records if r.split == split], root=self.root
        )

    def load_clip(self, record: ManifestRecord) -> MultiViewClip:
        views = {
            angle: load_frames(self.root / rel) for angle, rel in record.views.items()
        }
        return MultiViewClip(record.clip_id, views, list(record.transcript))

    def load_clip_alignment(self, record: ManifestRecord) -> FrameAlignment:
        if record.alignment is None:
            raise ValueError(f"clip {record.clip_id}: no alignment file in manifest")
        clip_t = load_frames(self.root / next(iter(sorted(record.views.values())))).shape[0]
        ali = load_alignment(self.root / record.alignment, expected_frames=clip_t)
        ali.clip_id = record.clip_id
        return ali


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a JSON-lines manifest; records sorted by clip_id."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    root = path.parent
    records: List[ManifestRecord] = []
    seen: Dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}:{lineno}: malformed JSON: {e}") from None
        try:
            rec = ManifestRecord(
                clip_id=obj["clip_id"],
                views={int(k): v for k, v in obj["views"].items()},
                transcript=list(obj["transcript"]),
                alignment=obj.get("alignment"),
                split=obj.get("split", "train"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{path}:{lineno}: bad record: {e}") from None
        if rec.clip_id in seen:
            raise ManifestError(
                f"{path}:{lineno}: duplicate clip_id {rec.clip_id!r}"
                f" (first seen at line {seen[rec.clip_id]})"
            )
        seen[rec.clip_id] = lineno
        for angle, rel in rec.views.items():
            if angle not in VALID_VIEWS:
                raise ManifestError(f"{path}:{lineno}: invalid view angle {angle}")
            if not (root / rel).exists():
                raise ManifestError(f"{path}:{lineno}: missing frame file {root / rel}")
        if rec.alignment is not None and not (root / rec.alignment).exists():
            raise ManifestError(f"{path}:{lineno}: missing alignment file {root / rec.alignment}")
        records.append(rec)
    records.sort(key=lambda r: r.clip_id)
    return DatasetManifest(records=records, root=root)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write the canonical form: sorted by clip_id, sorted JSON keys."""
    records = sorted(manifest.records, key=lambda r: r.clip_id)
    Path(path).write_text("".join(r.to_json() + "\n" for r in records))


# ---------------------------------------------------------------------------
# synthetic generation


def load_shape_table() -> Dict[str, Dict[str, float]]:
    text = resources.files("mvlip").joinpath("data/viseme_shapes.json").read_text("utf-8")
    table = json.loads(text)
    table.pop("_comment", None)
    return table


@dataclass
class GenConfig:
    """Synthetic dataset parameters. Generation is a pure function of these."""

    num_clips: int = 30
    views: Tuple[int, ...] = VALID_VIEWS
    t_range: Tuple[int, int] = (6, 12)
    frame_size: Tuple[int, int] = (64, 64)
    noise_level: float = 0.02
    seed: int = 0
    class_weights: Optional[Dict[str, float]] = None
    splits: Tuple[Tuple[str, float], ...] = (("train", 1.0),)
    appearance_jitter: float = 1.0  # scales per-clip brightness/size/position spread
    grammar: str = "uniform"  # "uniform" | "cv" (consonant-vowel syllables)


def _smooth_ellipse(ys, xs, cy, cx, ry, rx, softness=0.06):
    d = ((ys - cy) / max(ry, 1e-4)) ** 2 + ((xs - cx) / max(rx, 1e-4)) ** 2
    return 1.0 / (1.0 + np.exp(np.clip((d - 1.0) / softness, -60.0, 60.0)))


def render_mouth(
    params: Dict[str, float],
    angle: int,
    frame_size: Tuple[int, int],
    appearance: Dict[str, float],
) -> np.ndarray:
    """Rasterize one parametric mouth shape as seen from one camera angle.

    The mouth narrows with cos(angle); the protrusion lobe appears with
    sin(angle), so frontal twins in the shape table separate only off-axis.
    """
    h, w = frame_size
    ys, xs = np.meshgrid(
        np.linspace(-1.0, 1.0, h), np.linspace(-1.0, 1.0, w), indexing="ij"
    )
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    bright = appearance.get("brightness", 1.0)
    scale = appearance.get("scale", 1.0)
    cy = appearance.get("cy", 0.0)
    cx = appearance.get("cx", 0.0) - 0.25 * sin_t

    img = np.full((h, w), 0.55, dtype=np.float64)
    img += 0.05 * ys  # soft vertical shading

    width = params["width"] * (0.15 + 0.85 * cos_t) * scale * 2.0
    open_ = params["open"] * scale * 2.0
    round_ = params["round"]
    rx_ap = max(width * (1.0 - 0.45 * round_), 0.02)
    ry_ap = max(open_ * 0.42 * (1.0 + 0.6 * round_), 0.015)
    rx_lip = rx_ap + 0.14
    ry_lip = ry_ap + 0.12 + 0.05 * round_

    def paint(mask, color, alpha=1.0):
        nonlocal img
        img = img * (1.0 - alpha * mask) + color * alpha * mask

    paint(_smooth_ellipse(ys, xs, cy, cx, ry_lip, rx_lip), 0.35)
    aperture = _smooth_ellipse(ys, xs, cy, cx, ry_ap, rx_ap)
    paint(aperture, 0.06)
    if params["teeth"] > 0:
        teeth = _smooth_ellipse(ys, xs, cy - ry_ap * 0.45, cx, ry_ap * 0.40, rx_ap * 0.85)
        paint(teeth * aperture, 0.95, alpha=params["teeth"] * (0.25 + 0.75 * cos_t))
    if params["tongue"] > 0:
        tongue = _smooth_ellipse(ys, xs, cy + ry_ap * 0.42, cx, ry_ap * 0.55, rx_ap * 0.60)
        paint(tongue * aperture, 0.48, alpha=params["tongue"])
    if params["protrude"] > 0 and sin_t > 0:
        lobe_cx = cx - rx_lip - 0.03 - 0.10 * params["protrude"]
        lobe = _smooth_ellipse(ys, xs, cy, lobe_cx, ry_lip * 0.7, 0.06 + 0.12 * params["protrude"])
        paint(lobe, 0.30, alpha=sin_t * params["protrude"])

    return np.clip(img * bright, 0.0, 1.0)


# in "cv" grammar mode, each consonant leans toward one vowel successor, so
# sequence context carries information about frontally ambiguous consonants
CV_PREFERRED_VOWEL = {"A": "V1", "B": "V3", "C": "V2", "D": "V4",
                      "E": "V3", "F": "V1", "G": "V1", "H": "V3"}
CV_PREFERENCE = 0.8


def _weighted_choice(rng, symbols, cfg: GenConfig) -> str:
    if cfg.class_weights:
        w = np.array([cfg.class_weights.get(c, 1.0) for c in symbols], dtype=float)
    else:
        w = np.ones(len(symbols))
    return symbols[rng.choice(len(symbols), p=w / w.sum())]


def _make_transcript(rng: np.random.Generator, t_total: int, cfg: GenConfig):
    """Sample a viseme sequence plus per-symbol frame durations summing to T."""
    n_syms = max(1, min(int(round(t_total / 3.0)), t_total // 2))
    vowels = [c for c in VISEME_CLASSES if c.startswith("V")]
    consonants = [c for c in VISEME_CLASSES if not c.startswith("V")]
    symbols: List[str] = []
    if cfg.grammar == "cv":
        want_consonant = bool(rng.integers(0, 2))
        for _ in range(n_syms):
            if want_consonant:
                symbols.append(_weighted_choice(rng, consonants, cfg))
            else:
                prev = symbols[-1] if symbols else None
                if prev in CV_PREFERRED_VOWEL and rng.random() < CV_PREFERENCE:
                    symbols.append(CV_PREFERRED_VOWEL[prev])
                else:
                    symbols.append(vowels[rng.integers(0, len(vowels))])
            want_consonant = not want_consonant
    elif cfg.grammar == "uniform":
        for _ in range(n_syms):
            s = _weighted_choice(rng, list(VISEME_CLASSES), cfg)
            # avoid immediate repeats so collapse-based checks stay simple
            while symbols and s == symbols[-1]:
                s = _weighted_choice(rng, list(VISEME_CLASSES), cfg)
            symbols.append(s)
    else:
        raise ValueError(f"unknown grammar {cfg.grammar!r}")
    durations = np.full(n_syms, 2, dtype=int)
    for _ in range(t_total - int(durations.sum())):
        durations[rng.integers(0, n_syms)] += 1
    return symbols, durations.tolist()


def generate_synthetic(cfg: GenConfig, out_dir: str | Path) -> DatasetManifest:
    """Render a synthetic multi-view dataset; deterministic in (cfg, seed)."""
    for v in cfg.views:
        if v not in VALID_VIEWS:
            raise ValueError(f"invalid view angle {v}; choose from {VALID_VIEWS}")
    if cfg.t_range[0] > cfg.t_range[1] or cfg.t_range[0] < 2:
        raise ValueError(f"bad t_range {cfg.t_range}")

    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    (out / "alignments").mkdir(parents=True, exist_ok=True)
    shape_table = load_shape_table()

    split_names, split_weights = zip(*cfg.splits)
    split_weights = np.array(split_weights, dtype=float)
    split_weights = split_weights / split_weights.sum()

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.num_clips)
    records: List[ManifestRecord] = []
    for n in range(cfg.num_clips):
        rng = np.random.Generator(np.random.PCG64(seeds[n]))
        clip_id = f"clip{n:04d}"
        t_total = int(rng.integers(cfg.t_range[0], cfg.t_range[1] + 1))
        symbols, durations = _make_transcript(rng, t_total, cfg)

        # shared articulation trajectory, then per-view render
        j = cfg.appearance_jitter
        appearance = {
            "brightness": float(1.0 + rng.normal(0.0, 0.05 * j)),
            "scale": float(1.0 + rng.normal(0.0, 0.05 * j)),
            "cy": float(rng.normal(0.0, 0.02 * j)),
            "cx": float(rng.normal(0.0, 0.02 * j)),
        }
        frame_params: List[Dict[str, float]] = []
        labels: List[str] = []
        for sym, dur in zip(symbols, durations):
            base = shape_table[sym]
            for _ in range(dur):
                jitter = {k: float(np.clip(v * (1.0 + rng.normal(0.0, 0.04)), 0.0, 1.0))
                          for k, v in base.items()}
                frame_params.append(jitter)
                labels.append(sym)

        h, w = cfg.frame_size
        view_paths: Dict[int, str] = {}
        for angle in sorted(cfg.views):
            frames = np.stack(
                [render_mouth(p, angle, cfg.frame_size, appearance) for p in frame_params]
            )
            if cfg.noise_level > 0:
                frames = frames + rng.normal(0.0, cfg.noise_level, size=frames.shape)
            frames = np.clip(frames, 0.0, 1.0)[..., None]
            rel = f"clips/{clip_id}.{angle}.vlns"
            save_frames(out / rel, frames)
            view_paths[angle] = rel

        # pseudo word boundary roughly mid-transcript for longer clips
        boundaries: List[int] = []
        if len(symbols) >= 3:
            cut_sym = int(rng.integers(1, len(symbols)))
            boundaries = [int(sum(durations[:cut_sym]))]
        ali_rel = f"alignments/{clip_id}.csv"
        save_alignment(out / ali_rel, FrameAlignment(clip_id, labels, boundaries))

        split = split_names[int(rng.choice(len(split_names), p=split_weights))]
        records.append(
            ManifestRecord(clip_id, view_paths, symbols, alignment=ali_rel, split=split)
        )

    manifest = DatasetManifest(records=sorted(records, key=lambda r: r.clip_id), root=out)
    save_manifest(manifest, out / "manifest.jsonl")
    return manifest
