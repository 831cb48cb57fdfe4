"""The multi-view recognizer: shared encoders, attention decoder, CTC head."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .attention import AttentionTrace, TemporalAttention, ViewFusion, concat_views
from .ctc import ctc_loss
from .encoder import EncoderConfig, EncoderOutput, MultiViewEncoder, frames_to_tensor
from .vocab import Vocabulary, build_vocabulary


@dataclass
class ModelConfig:
    views: Tuple[int, ...] = (0, 30, 45, 60, 90)
    scorer: str = "location_aware"
    conv_channels: Tuple[int, ...] = (16, 32, 64, 96)
    in_channels: int = 1
    cell_size: int = 256
    att_dim: int = 128
    emb_dim: int = 64
    loc_kernel: int = 11
    loc_filters: int = 8
    dropout: float = 0.1

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            views=tuple(self.views),
            conv_channels=tuple(self.conv_channels),
            in_channels=self.in_channels,
            cell_size=self.cell_size,
            dropout=self.dropout,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        obj["views"] = tuple(obj["views"])
        obj["conv_channels"] = tuple(obj["conv_channels"])
        return cls(**obj)


@dataclass
class StepTrace:
    """Attention slice for one decoding step."""

    temporal: Dict[int, torch.Tensor]  # angle -> T weights
    view_weights: torch.Tensor  # V (sorted-angle order)
    fused_context: torch.Tensor


class LipReader(nn.Module):
    """Hybrid CTC/attention multi-view viseme recognizer."""

    def __init__(self, cfg: ModelConfig, vocab: Optional[Vocabulary] = None):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab or build_vocabulary()
        enc_cfg = cfg.encoder_config()
        self.encoder = MultiViewEncoder(enc_cfg)

        feat_dim = enc_cfg.feature_dim
        self.embedding = nn.Embedding(self.vocab.size, cfg.emb_dim)
        self.cell = nn.LSTMCell(cfg.emb_dim + feat_dim, cfg.cell_size)
        self.temporal_attention = nn.ModuleDict({
            str(v): TemporalAttention(
                cfg.scorer, cfg.cell_size, feat_dim, cfg.att_dim,
                cfg.loc_kernel, cfg.loc_filters,
            )
            for v in sorted(cfg.views)
        })
        self.view_fusion = ViewFusion(cfg.cell_size, feat_dim, cfg.att_dim)
        self.out_proj = nn.Linear(cfg.cell_size + feat_dim, self.vocab.size)
        self.ctc_proj = nn.Linear(len(cfg.views) * feat_dim, self.vocab.size)
        self.dropout = nn.Dropout(cfg.dropout)

    # ------------------------------------------------------------------
    # encoding

    def encode(self, view_frames: Dict[int, np.ndarray | torch.Tensor]) -> EncoderOutput:
        tensors = {}
        for angle, frames in view_frames.items():
            if isinstance(frames, torch.Tensor):
                tensors[angle] = frames
            else:
                tensors[angle] = frames_to_tensor(
                    frames, dtype=next(self.parameters()).dtype
                )
        return self.encoder(tensors)

    # ------------------------------------------------------------------
    # CTC branch

    def ctc_log_posteriors(self, enc: EncoderOutput) -> torch.Tensor:
        """T x vocab log-posteriors from the concatenated multi-view features."""
        if sorted(enc.features) != sorted(self.cfg.views):
            raise ValueError(
                f"CTC branch needs all configured views {sorted(self.cfg.views)}, "
                f"got {sorted(enc.features)}"
            )
        feats = concat_views(enc.features)
        return torch.log_softmax(self.ctc_proj(self.dropout(feats)), dim=-1)

    # ------------------------------------------------------------------
    # attention decoder

    def initial_decoder_state(self, enc: EncoderOutput):
        dtype = next(self.parameters()).dtype
        h = torch.zeros(self.cfg.cell_size, dtype=dtype)
        c = torch.zeros(self.cfg.cell_size, dtype=dtype)
        T = enc.num_frames
        uniform = torch.full((T,), 1.0 / T, dtype=dtype)
        prev_weights = {angle: uniform.clone() for angle in enc.angles}
        return (h, c), prev_weights

    def decode_step(
        self,
        prev_label: int,
        state,
        enc: EncoderOutput,
        prev_weights: Dict[int, torch.Tensor],
    ):
        """One decoder step: attend per view, fuse, update cell, project.

        Returns (log_probs over vocab, new_state, new_prev_weights, StepTrace).
        """
        (h, c) = state
        temporal_w: Dict[int, torch.Tensor] = {}
        contexts: Dict[int, torch.Tensor] = {}
        for angle in enc.angles:
            w, ctx = self.temporal_attention[str(angle)](
                h, enc.features[angle], prev_weights[angle]
            )
            temporal_w[angle] = w
            contexts[angle] = ctx
        _, view_w, fused = self.view_fusion(contexts, h)
        emb = self.embedding(torch.tensor(prev_label))
        h_new, c_new = self.cell(torch.cat([emb, fused]).unsqueeze(0), (h.unsqueeze(0), c.unsqueeze(0)))
        h_new, c_new = h_new.squeeze(0), c_new.squeeze(0)
        logits = self.out_proj(self.dropout(torch.cat([h_new, fused])))
        log_probs = torch.log_softmax(logits, dim=-1)
        trace = StepTrace(temporal=temporal_w, view_weights=view_w, fused_context=fused)
        return log_probs, (h_new, c_new), temporal_w, trace

    def attention_log_likelihood(
        self,
        enc: EncoderOutput,
        target_ids: Sequence[int],
        label_smoothing: float = 0.0,
        trace: Optional[AttentionTrace] = None,
    ) -> torch.Tensor:
        """Teacher-forced log p_att(y|x), with optional label smoothing.

        The returned value is the (smoothed) sum of per-step log scores for
        y + [eos]; at smoothing 0 it is exactly log p_att(y|x).
        """
        eos = self.vocab.sos_eos_id
        inputs = [eos] + list(target_ids)
        targets = list(target_ids) + [eos]
        state, prev_weights = self.initial_decoder_state(enc)
        total = torch.zeros((), dtype=next(self.parameters()).dtype)
        for prev, tgt in zip(inputs, targets):
            log_probs, state, prev_weights, step = self.decode_step(
                prev, state, enc, prev_weights
            )
            if label_smoothing > 0.0:
                smooth = log_probs.mean()
                total = total + (1.0 - label_smoothing) * log_probs[tgt] + label_smoothing * smooth
            else:
                total = total + log_probs[tgt]
            if trace is not None:
                trace.append_step(
                    {a: w.detach().double().numpy() for a, w in step.temporal.items()},
                    step.view_weights.detach().double().numpy(),
                    step.fused_context.detach().double().numpy(),
                )
        return total

    # ------------------------------------------------------------------
    # hybrid objective

    def hybrid_loss(
        self,
        view_frames: Dict[int, np.ndarray | torch.Tensor],
        target_ids: Sequence[int],
        ctc_weight: float = 0.4,
        label_smoothing: float = 0.0,
    ) -> Dict[str, torch.Tensor]:
        """loss = -[alpha * log p_ctc + (1 - alpha) * log p_att].

        Returns a dict with the combined loss and both components; an
        infeasible CTC target makes the loss infinite and is flagged.
        """
        if not 0.0 <= ctc_weight <= 1.0:
            raise ValueError(f"ctc_weight must be in [0, 1], got {ctc_weight}")
        enc = self.encode(view_frames)
        out: Dict[str, torch.Tensor] = {}
        feasible = True
        zero = torch.zeros(())
        ctc_nll = zero
        att_nll = zero
        if ctc_weight > 0.0:
            log_post = self.ctc_log_posteriors(enc)
            ctc_nll, feasible = ctc_loss(log_post, target_ids, blank=self.vocab.blank_id)
        if ctc_weight < 1.0:
            att_nll = -self.attention_log_likelihood(enc, target_ids, label_smoothing)
        loss = ctc_weight * ctc_nll + (1.0 - ctc_weight) * att_nll
        out["loss"] = loss
        out["ctc_nll"] = ctc_nll
        out["att_nll"] = att_nll
        out["feasible"] = torch.tensor(feasible)
        return out
