"""CTC loss wrapper and the prefix scorer used by joint decoding."""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

NEG_INF = -float("inf")


def ctc_feasible(target: Sequence[int], num_frames: int) -> bool:
    """CTC needs one frame per label plus one per consecutive repeat."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats <= num_frames


def ctc_loss(
    log_posteriors: torch.Tensor, target: Sequence[int], blank: int = 0
) -> Tuple[torch.Tensor, bool]:
    """Negative log-likelihood of `target` under per-frame log-posteriors.

    Returns (loss, feasible). Infeasible targets (longer than the frame
    count admits) yield an infinite loss with feasible=False rather than a
    silent zero; the gradient path is skipped in that case.
    """
    if any(c == blank for c in target):
        raise ValueError("CTC target must not contain the blank label")
    num_frames = log_posteriors.shape[0]
    if not ctc_feasible(target, num_frames):
        return torch.tensor(float("inf"), dtype=log_posteriors.dtype), False
    targets = torch.tensor([list(target)], dtype=torch.long)
    loss = F.ctc_loss(
        log_posteriors.unsqueeze(1),
        targets,
        torch.tensor([num_frames]),
        torch.tensor([len(target)]),
        blank=blank,
        reduction="sum",
        zero_infinity=False,
    )
    return loss, True


class CTCPrefixScorer:
    """Label-synchronous CTC prefix scores over fixed per-frame posteriors.

    Scores log P(prefix) for growing label sequences via the standard
    two-state (ends-blank / ends-nonblank) recursion, all in float64 log
    space. States are per-hypothesis and cheap to copy.
    """

    def __init__(self, log_posteriors: np.ndarray, blank: int = 0):
        x = np.asarray(log_posteriors, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("log_posteriors must be a non-empty T x K matrix")
        self.x = x
        self.num_frames, self.vocab_size = x.shape
        self.blank = blank

    def initial_state(self):
        """State for the empty prefix: only blanks emitted so far."""
        r_nonblank = np.full(self.num_frames, NEG_INF)
        r_blank = np.cumsum(self.x[:, self.blank])
        return r_nonblank, r_blank, None  # (r_n, r_b, last_label)

    def extend(self, state, label: int):
        """Score prefix + [label]; returns (new_state, prefix_log_prob)."""
        if label == self.blank:
            raise ValueError("cannot extend a prefix with the blank label")
        r_n, r_b, last = state
        T = self.num_frames
        xc = self.x[:, label]
        xb = self.x[:, self.blank]

        # phi[t]: prefix complete by frame t in a way that lets `label` start
        # at t+1 (always after blank; after non-blank only when different)
        if last is None or label != last:
            phi = np.logaddexp(r_b, r_n)
        else:
            phi = r_b

        new_r_n = np.full(T, NEG_INF)
        new_r_b = np.full(T, NEG_INF)
        start = 0.0 if last is None else NEG_INF  # empty prefix may start at t=0
        new_r_n[0] = start + xc[0]
        psi_terms = [new_r_n[0]]
        for t in range(1, T):
            new_r_n[t] = np.logaddexp(new_r_n[t - 1], phi[t - 1]) + xc[t]
            new_r_b[t] = np.logaddexp(new_r_b[t - 1], new_r_n[t - 1]) + xb[t]
            psi_terms.append(phi[t - 1] + xc[t])
        prefix_logp = _logsumexp(psi_terms)
        return (new_r_n, new_r_b, label), float(prefix_logp)

    def complete(self, state) -> float:
        """log P(output == prefix exactly), i.e. the full-sequence score."""
        r_n, r_b, _ = state
        return float(np.logaddexp(r_n[-1], r_b[-1]))


def _logsumexp(values) -> float:
    m = max(values)
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(sum(math.exp(v - m) for v in values))


def ctc_full_log_prob(log_posteriors: np.ndarray, target: Sequence[int], blank: int = 0) -> float:
    """log P(target) via the prefix scorer (used by decoding at end-of-sequence)."""
    scorer = CTCPrefixScorer(log_posteriors, blank)
    state = scorer.initial_state()
    for c in target:
        state, _ = scorer.extend(state, c)
    return scorer.complete(state)
