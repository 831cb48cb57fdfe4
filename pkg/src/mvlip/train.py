"""Training loop: Adam on the hybrid objective with early stopping."""

from __future__ import annotations

import copy
import csv
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from .beam import DecodeConfig, joint_beam_search
from .dataio import DatasetManifest, ManifestRecord
from .metrics import viseme_error_rate
from .model import LipReader, ModelConfig
from .vocab import build_vocabulary

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the offending batch id."""


@dataclass
class TrainConfig:
    ctc_weight: float = 0.4  # alpha
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 16
    epochs: int = 100
    label_smoothing: float = 0.1
    dropout: float = 0.1
    patience: int = 10
    grad_clip: float = 5.0
    eval_beam_width: int = 5

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_ver: Optional[float]


def _load_dataset(
    manifest: DatasetManifest,
    records: List[ManifestRecord],
    views: Optional[Tuple[int, ...]] = None,
):
    """Load clips as (clip_id, view->frames, target_ids, transcript) tuples.

    With `views` given, clips are restricted to those angles (single-view
    ablations train on the same multi-view manifests); a clip missing a
    requested view raises.
    """
    vocab = build_vocabulary()
    data = []
    for rec in records:
        clip = manifest.load_clip(rec)
        frames = clip.views
        if views is not None:
            missing = [v for v in views if v not in frames]
            if missing:
                raise ValueError(f"clip {rec.clip_id}: missing views {missing}")
            frames = {v: frames[v] for v in views}
        target = [vocab.id_of(s) for s in rec.transcript]
        data.append((rec.clip_id, frames, target, list(rec.transcript)))
    return data


def evaluate_ver(
    model: LipReader, data, beam_width: int = 5, ctc_weight: float = 0.3
) -> float:
    """Corpus VER of joint-beam decodes against the transcripts."""
    cfg = DecodeConfig(beam_width=beam_width, ctc_weight=ctc_weight)
    total_edits = 0
    total_ref = 0
    was_training = model.training
    model.eval()
    for clip_id, views, _, transcript in data:
        enc = model.encode(views)
        hyp, _, _ = joint_beam_search(model, enc, cfg, clip_id=clip_id)
        _, ins, sub, dele = viseme_error_rate(hyp, transcript)
        total_edits += ins + sub + dele
        total_ref += len(transcript)
    model.train(was_training)
    return total_edits / max(total_ref, 1)


def train(
    manifest: DatasetManifest,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: int,
    out_dir: str | Path,
) -> Tuple[LipReader, List[EpochStats]]:
    """Train on the manifest's train split; early-stop on validation VER.

    Writes `checkpoint.mvck` (best parameters) and `epochs.csv`
    (`epoch,train_loss,val_ver`) under out_dir and returns the restored-best
    model plus the per-epoch history.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    train_records = [r for r in manifest.records if r.split == "train"]
    val_records = [r for r in manifest.records if r.split == "val"]
    if not train_records:
        raise ValueError("manifest has no records with split == 'train'")
    model_cfg = copy.deepcopy(model_cfg)
    model_cfg.dropout = train_cfg.dropout
    model = LipReader(model_cfg)

    views = tuple(model_cfg.views)
    train_data = _load_dataset(manifest, train_records, views)
    val_data = _load_dataset(manifest, val_records, views) if val_records else None

    opt = torch.optim.Adam(
        model.parameters(),
        lr=train_cfg.learning_rate,
        betas=(train_cfg.beta1, train_cfg.beta2),
    )

    history: List[EpochStats] = []
    best_metric = float("inf")
    best_state = copy.deepcopy(model.state_dict())
    stale = 0
    from .checkpoint import save_checkpoint

    for epoch in range(1, train_cfg.epochs + 1):
        model.train()
        order = rng.permutation(len(train_data))
        epoch_loss = 0.0
        num_batches = 0
        for b, start in enumerate(range(0, len(order), train_cfg.batch_size)):
            batch = [train_data[i] for i in order[start : start + train_cfg.batch_size]]
            opt.zero_grad()
            losses = []
            for clip_id, views, target, _ in batch:
                parts = model.hybrid_loss(
                    views,
                    target,
                    ctc_weight=train_cfg.ctc_weight,
                    label_smoothing=train_cfg.label_smoothing,
                )
                if not bool(parts["feasible"]):
                    raise TrainingDiverged(
                        f"infeasible CTC target for clip {clip_id} (epoch {epoch}, batch {b})"
                    )
                losses.append(parts["loss"])
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}, batch {b}")
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
            opt.step()
            epoch_loss += loss.item()
            num_batches += 1

        train_loss = epoch_loss / max(num_batches, 1)
        val_ver = None
        if val_data:
            model.eval()
            val_ver = evaluate_ver(model, val_data, train_cfg.eval_beam_width)
        history.append(EpochStats(epoch=epoch, train_loss=train_loss, val_ver=val_ver))
        logger.info("epoch %d: loss %.4f val_ver %s", epoch, train_loss,
                    f"{val_ver:.4f}" if val_ver is not None else "-")

        metric = val_ver if val_ver is not None else train_loss
        if metric < best_metric - 1e-9:
            best_metric = metric
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.patience:
                logger.info("early stopping at epoch %d", epoch)
                break

    model.load_state_dict(best_state)
    save_checkpoint(out / "checkpoint.mvck", model,
                    extra={"seed": seed, "train_config": train_cfg.to_dict()})
    with open(out / "epochs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_ver"])
        for st in history:
            writer.writerow([st.epoch, f"{st.train_loss:.6f}",
                             "" if st.val_ver is None else f"{st.val_ver:.6f}"])
    return model, history
