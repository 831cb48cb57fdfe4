"""Viseme vocabulary, label codec, and the phoneme-to-viseme mapping."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

BLANK = "[blank]"
SOS_EOS = "[sos/eos]"

#: The 12 viseme classes: four vowel groups plus eight consonant groups
#: (bilabial, labiodental, dental, alveolar stop, alveolar fricative,
#: palato-alveolar, velar/glottal, rounded approximant).
VISEME_CLASSES = (
    "V1", "V2", "V3", "V4",
    "A", "B", "C", "D", "E", "F", "G", "H",
)


class UnknownSymbolError(KeyError):
    """A label or phoneme is not covered by the vocabulary/mapping."""


@dataclass(frozen=True)
class Vocabulary:
    """Fixed 14-symbol output vocabulary: blank + 12 viseme classes + sos/eos.

    Immutable after construction; safe to share across threads.
    """

    symbols: tuple

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def blank_id(self) -> int:
        return self.symbols.index(BLANK)

    @property
    def sos_eos_id(self) -> int:
        return self.symbols.index(SOS_EOS)

    @property
    def viseme_classes(self) -> tuple:
        return tuple(s for s in self.symbols if s not in (BLANK, SOS_EOS))

    def id_of(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise UnknownSymbolError(f"unknown symbol {symbol!r}") from None

    def symbol_of(self, label_id: int) -> str:
        if not 0 <= label_id < len(self.symbols):
            raise UnknownSymbolError(f"label id {label_id} out of range")
        return self.symbols[label_id]


def build_vocabulary() -> Vocabulary:
    """Return the 14-symbol vocabulary: blank first, sos/eos last."""
    return Vocabulary(symbols=(BLANK,) + VISEME_CLASSES + (SOS_EOS,))


def encode_labels(seq: Sequence[str], vocab: Vocabulary) -> List[int]:
    """Map viseme symbols to integer ids. Raises on unknown symbols."""
    return [vocab.id_of(s) for s in seq]


def decode_labels(ids: Sequence[int], vocab: Vocabulary) -> List[str]:
    """Inverse of :func:`encode_labels`."""
    return [vocab.symbol_of(i) for i in ids]


@dataclass(frozen=True)
class PhonemeVisemeMap:
    """Many-to-one phoneme-name to viseme-class mapping."""

    entries: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        bad = {v for v in self.entries.values() if v not in VISEME_CLASSES}
        if bad:
            raise ValueError(f"mapping targets outside viseme classes: {sorted(bad)}")

    def viseme_for(self, phoneme: str) -> str:
        return self.entries[phoneme]


def load_phoneme_map(path: str | Path | None = None) -> PhonemeVisemeMap:
    """Load a `phoneme<TAB>viseme` mapping file.

    Lines starting with `#` and blank lines are ignored. When no path is
    given, the default mapping shipped with the package is used.
    """
    if path is None:
        text = (
            resources.files("mvlip").joinpath("data/phoneme_viseme_map.tsv").read_text("utf-8")
        )
    else:
        text = Path(path).read_text("utf-8")
    entries: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"malformed mapping line {lineno}: {raw!r}")
        phoneme, viseme = parts[0].strip(), parts[1].strip()
        if phoneme in entries:
            raise ValueError(f"duplicate phoneme {phoneme!r} at line {lineno}")
        entries[phoneme] = viseme
    return PhonemeVisemeMap(entries=entries)


def collapse_runs(seq: Iterable[str]) -> List[str]:
    """Merge consecutive duplicate symbols into one. Idempotent."""
    out: List[str] = []
    for s in seq:
        if not out or out[-1] != s:
            out.append(s)
    return out


def phonemes_to_visemes(
    phonemes: Sequence[str],
    mapping: PhonemeVisemeMap | None = None,
    collapse: bool = False,
) -> List[str]:
    """Translate a phoneme sequence into its viseme sequence.

    With ``collapse`` enabled, consecutive duplicate visemes merge into one
    (many phonemes share a viseme, so runs are common).
    """
    if mapping is None:
        mapping = load_phoneme_map()
    out: List[str] = []
    for i, p in enumerate(phonemes):
        if p not in mapping.entries:
            raise UnknownSymbolError(f"unknown phoneme {p} at {i}")
        out.append(mapping.entries[p])
    return collapse_runs(out) if collapse else out
