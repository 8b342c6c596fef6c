"""Corpus handling: labeled text files, character alphabets, fixed-length
encoding, train/dev splits, and shuffled mini-batches.

The on-disk data format is one record per line, ``text TAB label``, UTF-8,
LF line endings (a trailing CR is tolerated and stripped). Records with
embedded tabs are split on the *last* tab. Unlabeled prediction input is
one text per line, taken verbatim.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

PAD_INDEX = 0
UNK_INDEX = 1


class DataFormatError(ValueError):
    """An input file does not follow the expected record format."""


@dataclass(frozen=True)
class LabeledExample:
    """One text with its class name."""

    text: str
    label: str


class Alphabet:
    """Bidirectional character/index map with reserved PAD=0 and UNK=1.

    Real characters occupy indices 2..size-1 in the order given at
    construction. ``build_alphabet`` produces that order sorted by code
    point, which keeps serialization deterministic.
    """

    def __init__(self, chars: Iterable[str]):
        chars = tuple(chars)
        for c in chars:
            if len(c) != 1:
                raise ValueError(f"alphabet entries must be single characters, got {c!r}")
        if len(set(chars)) != len(chars):
            raise ValueError("alphabet contains duplicate characters")
        self.chars = chars
        self._char_to_index = {c: i + 2 for i, c in enumerate(chars)}

    @property
    def size(self) -> int:
        """Total number of indices, including PAD and UNK."""
        return len(self.chars) + 2

    def index(self, char: str) -> int:
        """Index of ``char``, or UNK_INDEX for out-of-alphabet characters."""
        return self._char_to_index.get(char, UNK_INDEX)

    def char(self, index: int) -> str:
        """Character at ``index`` (must be >= 2; PAD/UNK have no character)."""
        if index < 2 or index >= self.size:
            raise IndexError(f"index {index} has no character (alphabet size {self.size})")
        return self.chars[index - 2]

    def decode(self, indices: Iterable[int]) -> str:
        """Characters for the given indices, dropping PAD and UNK."""
        return "".join(self.chars[i - 2] for i in indices if i >= 2)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Alphabet) and self.chars == other.chars

    def __repr__(self) -> str:
        return f"Alphabet({len(self.chars)} chars + PAD/UNK)"


class LabelSet:
    """Ordered set of class names with a stable name -> index map."""

    def __init__(self, names: Iterable[str]):
        names = tuple(names)
        if not names:
            raise ValueError("label set is empty")
        if len(set(names)) != len(names):
            raise ValueError("label set contains duplicate names")
        self.names = names
        self._name_to_index = {n: i for i, n in enumerate(names)}

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._name_to_index[name]
        except KeyError:
            raise DataFormatError(f"unknown label {name!r}") from None

    def name(self, index: int) -> str:
        return self.names[index]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelSet) and self.names == other.names

    def __repr__(self) -> str:
        return f"LabelSet({list(self.names)})"


@dataclass
class Batch:
    """A mini-batch of encoded inputs and (optionally) gold label indices."""

    inputs: np.ndarray  # [B, L] int32
    labels: np.ndarray | None = None  # [B] int64

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or len(self.inputs) < 1:
            raise ValueError("batch inputs must be a non-empty [B, L] matrix")
        if self.labels is not None and len(self.labels) != len(self.inputs):
            raise ValueError("batch inputs and labels have different lengths")

    def __len__(self) -> int:
        return len(self.inputs)


def load_dsl_file(path, allow_empty: bool = False) -> list[LabeledExample]:
    """Read a ``text TAB label`` file into a list of examples, in file order.

    Lines are split on the last tab; the label is stripped of surrounding
    whitespace while the text is kept verbatim. Raises DataFormatError on
    lines without a tab, on empty texts (unless ``allow_empty``), and on
    non-UTF-8 input.
    """
    examples = []
    try:
        # newline="\n": records end at LF only; a trailing CR is stripped below
        with open(path, encoding="utf-8", newline="\n") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n").rstrip("\r")
                if "\t" not in line:
                    raise DataFormatError(f"{path}: line {lineno}: no tab separator")
                text, label = line.rsplit("\t", 1)
                label = label.strip()
                if not label:
                    raise DataFormatError(f"{path}: line {lineno}: empty label")
                if not text and not allow_empty:
                    raise DataFormatError(f"{path}: line {lineno}: empty text")
                examples.append(LabeledExample(text=text, label=label))
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not valid UTF-8 ({exc})") from exc
    return examples


def load_texts(path) -> list[str]:
    """Read unlabeled prediction input: one text per line, taken verbatim."""
    try:
        with open(path, encoding="utf-8", newline="\n") as fh:
            return [line.rstrip("\n").rstrip("\r") for line in fh]
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not valid UTF-8 ({exc})") from exc


def build_alphabet(corpus: Sequence[LabeledExample]) -> Alphabet:
    """Alphabet of every distinct character in the corpus, sorted by code point.

    Deterministic for a given corpus regardless of example order.
    """
    if not corpus:
        raise ValueError("cannot build an alphabet from an empty corpus")
    chars: set[str] = set()
    for example in corpus:
        chars.update(example.text)
    return Alphabet(sorted(chars))


def build_label_set(corpus: Sequence[LabeledExample]) -> LabelSet:
    """Lexicographically ordered label set of the corpus classes."""
    if not corpus:
        raise ValueError("cannot build a label set from an empty corpus")
    return LabelSet(sorted({example.label for example in corpus}))


def encode(text: str, alphabet: Alphabet, max_len: int) -> np.ndarray:
    """Map ``text`` to exactly ``max_len`` alphabet indices.

    The first ``max_len`` characters are kept (head truncation); shorter
    texts are padded with PAD_INDEX. Out-of-alphabet characters map to
    UNK_INDEX.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    indices = np.full(max_len, PAD_INDEX, dtype=np.int32)
    head = text[:max_len]
    for i, c in enumerate(head):
        indices[i] = alphabet.index(c)
    return indices


def encode_corpus(
    corpus: Sequence[LabeledExample],
    alphabet: Alphabet,
    labels: LabelSet,
    max_len: int,
) -> list[tuple[np.ndarray, int]]:
    """Encode every example to (indices, label index) pairs."""
    return [(encode(ex.text, alphabet, max_len), labels.index(ex.label)) for ex in corpus]


def split_train_dev(
    corpus: Sequence, dev_fraction: float, seed: int
) -> tuple[list, list]:
    """Shuffle under ``seed`` and split off the tail as the dev set.

    The dev set holds floor(n * dev_fraction) items, clamped to at least 1.
    The partition is disjoint and exhaustive, and deterministic per seed.
    """
    if not 0.0 < dev_fraction < 1.0:
        raise ValueError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    n = len(corpus)
    if n < 2:
        raise ValueError("need at least 2 examples to split")
    order = np.random.default_rng(seed).permutation(n)
    dev_size = max(1, int(n * dev_fraction))
    shuffled = [corpus[i] for i in order]
    return shuffled[: n - dev_size], shuffled[n - dev_size :]


def batches(
    data: Sequence[tuple[np.ndarray, int]], batch_size: int, epoch_seed: int
) -> list[Batch]:
    """Shuffle encoded examples under ``epoch_seed`` and chunk into batches.

    Every example appears exactly once; the final batch may be smaller.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not data:
        raise ValueError("cannot batch an empty dataset")
    order = np.random.default_rng(epoch_seed).permutation(len(data))
    out = []
    for start in range(0, len(data), batch_size):
        chunk = order[start : start + batch_size]
        inputs = np.stack([data[i][0] for i in chunk])
        labels = np.array([data[i][1] for i in chunk], dtype=np.int64)
        out.append(Batch(inputs=inputs, labels=labels))
    return out
