"""Viseme error rate and confusion matrices."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .vocab import VISEME_CLASSES

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"


def align(hyp: Sequence[str], ref: Sequence[str]) -> List[Tuple[str, int, int]]:
    """Minimal edit alignment of hyp against ref.

    Returns (op, ref_index, hyp_index) triples in reference order; the index
    is -1 on the side an op does not consume. Ties in the backtrace are
    broken match > substitution > deletion > insertion so downstream counts
    are deterministic.
    """
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            same = ref[i - 1] == hyp[j - 1]
            dist[i, j] = min(
                dist[i - 1, j - 1] + (0 if same else 1),
                dist[i - 1, j] + 1,  # deletion: ref symbol missing from hyp
                dist[i, j - 1] + 1,  # insertion: extra hyp symbol
            )
    ops: List[Tuple[str, int, int]] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i, j] == dist[i - 1, j - 1]:
            ops.append((MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + 1:
            ops.append((SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            ops.append((DEL, i - 1, -1))
            i -= 1
        else:
            ops.append((INS, -1, j - 1))
            j -= 1
    ops.reverse()
    return ops


def viseme_error_rate(
    hyp: Sequence[str], ref: Sequence[str]
) -> Tuple[float, int, int, int]:
    """(rate, insertions, substitutions, deletions) for one utterance pair.

    Rate is the minimal edit count divided by the reference length; the
    reference must be non-empty.
    """
    if len(ref) == 0:
        raise ValueError("reference sequence is empty; VER is undefined")
    ops = align(hyp, ref)
    ins = sum(1 for op, _, _ in ops if op == INS)
    sub = sum(1 for op, _, _ in ops if op == SUB)
    dele = sum(1 for op, _, _ in ops if op == DEL)
    return (ins + sub + dele) / len(ref), ins, sub, dele


@dataclass
class EvalReport:
    """Corpus-level scoring summary (micro-averaged over utterances)."""

    ver: float
    insertions: int
    substitutions: int
    deletions: int
    ref_length: int
    num_pairs: int
    confusion: np.ndarray  # 12x12 counts, rows = reference class
    classes: Tuple[str, ...] = VISEME_CLASSES

    def confusion_normalized(self) -> np.ndarray:
        """Row-normalized confusion (rows with no mass stay zero)."""
        sums = self.confusion.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(sums > 0, self.confusion / sums, 0.0)
        return out

    def to_dict(self) -> dict:
        return {
            "ver": self.ver,
            "insertions": self.insertions,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "ref_length": self.ref_length,
            "num_pairs": self.num_pairs,
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "confusion_row_normalized": self.confusion_normalized().tolist(),
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def save_confusion_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ref\\hyp"] + list(self.classes))
            for name, row in zip(self.classes, self.confusion):
                writer.writerow([name] + [int(c) for c in row])


def confusion_matrix(
    pairs: Sequence[Tuple[Sequence[str], Sequence[str]]],
    classes: Sequence[str] = VISEME_CLASSES,
) -> Tuple[np.ndarray, int, int]:
    """12x12 (ref_class, hyp_class) counts from edit-distance backtraces.

    Matches land on the diagonal; insertions/deletions are returned as
    separate tallies since they have no (ref, hyp) cell.
    """
    index: Dict[str, int] = {c: k for k, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    ins = dele = 0
    for hyp, ref in pairs:
        for op, ri, hi in align(hyp, ref):
            if op == MATCH:
                counts[index[ref[ri]], index[ref[ri]]] += 1
            elif op == SUB:
                counts[index[ref[ri]], index[hyp[hi]]] += 1
            elif op == DEL:
                dele += 1
            else:
                ins += 1
    return counts, ins, dele


def evaluate_pairs(
    pairs: Sequence[Tuple[Sequence[str], Sequence[str]]],
    classes: Sequence[str] = VISEME_CLASSES,
) -> EvalReport:
    """Score (hyp, ref) pairs: micro-average VER plus confusion counts."""
    total_ins = total_sub = total_del = total_ref = 0
    for hyp, ref in pairs:
        _, ins, sub, dele = viseme_error_rate(hyp, ref)
        total_ins += ins
        total_sub += sub
        total_del += dele
        total_ref += len(ref)
    confusion, _, _ = confusion_matrix(pairs, classes)
    return EvalReport(
        ver=(total_ins + total_sub + total_del) / total_ref,
        insertions=total_ins,
        substitutions=total_sub,
        deletions=total_del,
        ref_length=total_ref,
        num_pairs=len(pairs),
        confusion=confusion,
        classes=tuple(classes),
    )
