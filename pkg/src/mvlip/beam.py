"""Label-synchronous joint CTC/attention beam search."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch

from .attention import AttentionTrace
from .ctc import CTCPrefixScorer
from .encoder import EncoderOutput
from .model import LipReader


@dataclass
class DecodeConfig:
    beam_width: int = 5
    ctc_weight: float = 0.3  # lambda; endpoints allowed for ablations
    max_steps: Optional[int] = None  # None -> frame count T

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if not 0.0 <= self.ctc_weight <= 1.0:
            raise ValueError("ctc_weight must be in [0, 1]")


@dataclass
class Hypothesis:
    """Beam entry: partial label sequence with both decoder scores."""

    labels: Tuple[int, ...]  # without the leading sos / trailing eos
    att_logp: float
    ctc_prefix_logp: float
    joint: float
    state: tuple = None
    prev_weights: dict = None
    ctc_state: tuple = None
    steps: list = field(default_factory=list)  # StepTrace per emitted label
    ended: bool = False

    def sort_key(self):
        # determinism: joint desc, then att desc, then lexicographic labels
        return (-self.joint, -self.att_logp, self.labels)


def joint_score(ctc_logp: float, att_logp: float, lam: float) -> float:
    return lam * ctc_logp + (1.0 - lam) * att_logp


def joint_beam_search(
    model: LipReader,
    enc: EncoderOutput,
    cfg: DecodeConfig,
    clip_id: str = "",
) -> Tuple[List[str], AttentionTrace, Hypothesis]:
    """Decode one utterance; returns (symbols, trace of best path, hypothesis).

    Hypotheses grow one label per step, each candidate scored
    lambda * log p_ctc(prefix) + (1 - lambda) * log p_att(prefix); emitting
    eos closes a hypothesis with the full-sequence CTC score. After
    max_steps labels only eos may be emitted, so decoding always terminates
    with at least one complete hypothesis.
    """
    if enc.num_frames == 0:
        raise ValueError("empty encoder output")
    lam = cfg.ctc_weight
    eos = model.vocab.sos_eos_id
    blank = model.vocab.blank_id
    max_labels = cfg.max_steps if cfg.max_steps is not None else enc.num_frames

    scorer = None
    if lam > 0.0:
        with torch.no_grad():
            log_post = model.ctc_log_posteriors(enc).double().numpy()
        scorer = CTCPrefixScorer(log_post, blank=blank)

    state, prev_weights = model.initial_decoder_state(enc)
    root = Hypothesis(
        labels=(),
        att_logp=0.0,
        ctc_prefix_logp=0.0,
        joint=0.0,
        state=state,
        prev_weights=prev_weights,
        ctc_state=scorer.initial_state() if scorer else None,
    )
    beams = [root]
    ended: List[Hypothesis] = []

    was_training = model.training
    model.eval()
    with torch.no_grad():
        for step in range(max_labels + 1):
            candidates: List[Hypothesis] = []
            for hyp in beams:
                prev_label = hyp.labels[-1] if hyp.labels else eos
                log_probs, new_state, new_weights, step_trace = model.decode_step(
                    prev_label, hyp.state, enc, hyp.prev_weights
                )
                lp = log_probs.double().numpy()
                # eos closes the hypothesis with the complete CTC score; the
                # eos step itself emits no viseme so it stays out of the trace
                att_end = hyp.att_logp + float(lp[eos])
                ctc_end = scorer.complete(hyp.ctc_state) if scorer else 0.0
                ended.append(
                    Hypothesis(
                        labels=hyp.labels,
                        att_logp=att_end,
                        ctc_prefix_logp=ctc_end,
                        joint=joint_score(ctc_end, att_end, lam),
                        steps=list(hyp.steps),
                        ended=True,
                    )
                )
                if step == max_labels:
                    continue  # final step: eos only
                for c in range(model.vocab.size):
                    if c in (blank, eos):
                        continue
                    att_new = hyp.att_logp + float(lp[c])
                    if scorer:
                        ctc_new_state, ctc_new = scorer.extend(hyp.ctc_state, c)
                    else:
                        ctc_new_state, ctc_new = None, 0.0
                    candidates.append(
                        Hypothesis(
                            labels=hyp.labels + (c,),
                            att_logp=att_new,
                            ctc_prefix_logp=ctc_new,
                            joint=joint_score(ctc_new, att_new, lam),
                            state=new_state,
                            prev_weights=new_weights,
                            ctc_state=ctc_new_state,
                            steps=hyp.steps + [step_trace],
                        )
                    )
            if not candidates:
                break
            candidates.sort(key=Hypothesis.sort_key)
            beams = candidates[: cfg.beam_width]
    model.train(was_training)

    best = min(ended, key=Hypothesis.sort_key)
    symbols = [model.vocab.symbol_of(i) for i in best.labels]
    trace = AttentionTrace(clip_id=clip_id, angles=enc.angles)
    for st in best.steps:
        trace.append_step(
            {a: w.detach().double().numpy() for a, w in st.temporal.items()},
            st.view_weights.detach().double().numpy(),
            st.fused_context.detach().double().numpy(),
        )
    return symbols, trace, best
