"""Quantizing thing windows into abstract statements and histograms.

A statement is a closed-grammar sentence such as "Green small squared thing
at top middle": one word per window property, no nouns, no object identity.
Continuous properties are quantized with equal-probability bin boundaries
fitted on a holdout set; color keeps its fixed 11-way table. A set of
windows (or of statement texts) becomes a dense histogram over all statement
combinations.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .colors import COLOR_NAMES, N_COLORS
from .errors import InsufficientDataError, ParseError
from .windows import (
    CONTINUOUS_PROPERTIES,
    FULL_MASK,
    PropertyMask,
    SyntaxMatrix,
    ThingWindow,
    property_values,
)

# Word scales for the two bin counts with natural vocabularies. Any other
# bin count falls back to indexed tokens like "size-2".
_VOCAB = {
    3: {
        "horizontal": ("left", "middle", "right"),
        "vertical": ("top", "center", "bottom"),
        "size": ("small", "medium", "large"),
        "ratio": ("tall", "squared", "wide"),
    },
    5: {
        "horizontal": ("most-left", "left", "middle", "right", "most-right"),
        "vertical": ("most-top", "top", "center", "bottom", "most-bottom"),
        "size": ("smallest", "small", "medium", "large", "largest"),
        "ratio": ("most-tall", "tall", "squared", "wide", "most-wide"),
    },
}

ANY_COLOR_WORD = "any"


def vocabulary(bins_per_property: int) -> dict[str, tuple[str, ...]]:
    """Per-property word lists for a given bin count."""
    if bins_per_property in _VOCAB:
        return _VOCAB[bins_per_property]
    return {
        prop: tuple(f"{prop}-{k}" for k in range(bins_per_property))
        for prop in CONTINUOUS_PROPERTIES
    }


@dataclass(frozen=True)
class BinBoundaries:
    """Equal-probability cut points for the four continuous properties.

    ``cuts`` holds, per property in canonical order, the B-1 interior
    boundaries; bins are half-open [low, high) with the last bin closed
    above. Color is always 11-way and has no cuts.
    """

    bins_per_property: int
    cuts: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if self.bins_per_property < 2:
            raise ValueError("bins_per_property must be >= 2")
        if len(self.cuts) != len(CONTINUOUS_PROPERTIES):
            raise ValueError("expected one cut list per continuous property")
        for prop, cut in zip(CONTINUOUS_PROPERTIES, self.cuts):
            if len(cut) != self.bins_per_property - 1:
                raise ValueError(f"{prop}: expected {self.bins_per_property - 1} cuts, got {len(cut)}")
            if any(b <= a for a, b in zip(cut, cut[1:])):
                raise ValueError(f"{prop}: cut points must be strictly increasing: {cut}")

    def cuts_for(self, prop: str) -> tuple[float, ...]:
        return self.cuts[CONTINUOUS_PROPERTIES.index(prop)]


def fit_boundaries(holdout_syntax: Sequence[SyntaxMatrix], bins_per_property: int) -> BinBoundaries:
    """Fit per-property cut points as the k/B quantiles of the pooled holdout.

    By construction each bin receives (close to) equal probability mass on
    the holdout windows, so every statement word is about equally likely.
    """
    if bins_per_property < 2:
        raise ValueError("bins_per_property must be >= 2")
    n_windows = sum(s.n for s in holdout_syntax)
    if n_windows < bins_per_property:
        raise InsufficientDataError(
            f"need at least {bins_per_property} holdout windows, got {n_windows}")
    quantiles = np.arange(1, bins_per_property) / bins_per_property
    cuts = []
    for prop in CONTINUOUS_PROPERTIES:
        pooled = np.concatenate([property_values(s, prop) for s in holdout_syntax if s.n])
        cut = np.quantile(pooled, quantiles)
        if np.any(np.diff(cut) <= 0):
            raise InsufficientDataError(
                f"{prop}: holdout too concentrated to split into "
                f"{bins_per_property} equal-mass bins (cuts {cut.tolist()})")
        cuts.append(tuple(float(c) for c in cut))
    return BinBoundaries(bins_per_property=bins_per_property, cuts=tuple(cuts))


@dataclass(frozen=True)
class Statement:
    """One quantized thing: a bin per continuous property plus a color.

    ``color=None`` stands for the wildcard word "any" used in human queries;
    histogram ingestion spreads such a statement uniformly over the 11
    color slices.
    """

    horizontal_bin: int
    vertical_bin: int
    size_bin: int
    ratio_bin: int
    color: Optional[int]

    def bin_for(self, prop: str) -> int:
        if prop == "horizontal":
            return self.horizontal_bin
        if prop == "vertical":
            return self.vertical_bin
        if prop == "size":
            return self.size_bin
        if prop == "ratio":
            return self.ratio_bin
        raise ValueError(f"unknown continuous property {prop!r}")

    def validate(self, bins_per_property: int) -> None:
        for prop in CONTINUOUS_PROPERTIES:
            if not 0 <= self.bin_for(prop) < bins_per_property:
                raise ValueError(f"{prop} bin out of range: {self.bin_for(prop)}")
        if self.color is not None and not 0 <= self.color < N_COLORS:
            raise ValueError(f"color out of range: {self.color}")


def quantize_value(value: float, cuts: Sequence[float]) -> int:
    """Locate the half-open bin of one value; values on a cut go up."""
    return int(np.searchsorted(np.asarray(cuts), value, side="right"))


def quantize_window(window: ThingWindow, boundaries: BinBoundaries) -> Statement:
    """Quantize each property of a window separately; color passes through."""
    bins = {
        prop: quantize_value(getattr(window, attr), boundaries.cuts_for(prop))
        for prop, attr in zip(CONTINUOUS_PROPERTIES, ("x", "y", "size", "ratio"))
    }
    return Statement(
        horizontal_bin=bins["horizontal"],
        vertical_bin=bins["vertical"],
        size_bin=bins["size"],
        ratio_bin=bins["ratio"],
        color=window.color,
    )


# --- statement <-> histogram-index bijection -------------------------------

def histogram_dims(bins_per_property: int, mask: PropertyMask = FULL_MASK) -> tuple[int, ...]:
    return tuple(
        N_COLORS if prop == "color" else bins_per_property
        for prop in mask.ordered
    )


def histogram_length(bins_per_property: int, mask: PropertyMask = FULL_MASK) -> int:
    length = 1
    for d in histogram_dims(bins_per_property, mask):
        length *= d
    return length


def statement_index(statement: Statement, bins_per_property: int,
                    mask: PropertyMask = FULL_MASK) -> int:
    """Row-major index over (horizontal, vertical, size, ratio, color)."""
    statement.validate(bins_per_property)
    index = 0
    for prop, dim in zip(mask.ordered, histogram_dims(bins_per_property, mask)):
        digit = statement.color if prop == "color" else statement.bin_for(prop)
        if digit is None:
            raise ValueError("cannot index a statement with wildcard color")
        index = index * dim + digit
    return index


def statement_from_index(index: int, bins_per_property: int,
                         mask: PropertyMask = FULL_MASK) -> Statement:
    """Inverse of statement_index; masked-out properties come back as bin 0."""
    dims = histogram_dims(bins_per_property, mask)
    digits: dict[str, int] = {}
    for prop, dim in zip(reversed(mask.ordered), reversed(dims)):
        digits[prop] = index % dim
        index //= dim
    if index:
        raise ValueError("index out of range for histogram dimensions")
    return Statement(
        horizontal_bin=digits.get("horizontal", 0),
        vertical_bin=digits.get("vertical", 0),
        size_bin=digits.get("size", 0),
        ratio_bin=digits.get("ratio", 0),
        color=digits.get("color") if mask.has_color else None,
    )


def all_statements(bins_per_property: int) -> Iterator[Statement]:
    """Every statement combination, in histogram index order."""
    b = range(bins_per_property)
    for h, v, s, r, c in itertools.product(b, b, b, b, range(N_COLORS)):
        yield Statement(h, v, s, r, c)


# --- rendering and parsing ---------------------------------------------------

def render_statement(statement: Statement, bins_per_property: int) -> str:
    """Canonical text form: "<Color> <size> <shape> thing at <vertical> <horizontal>"."""
    statement.validate(bins_per_property)
    vocab = vocabulary(bins_per_property)
    color_word = ANY_COLOR_WORD if statement.color is None else COLOR_NAMES[statement.color]
    return (
        f"{color_word.capitalize()} {vocab['size'][statement.size_bin]} "
        f"{vocab['ratio'][statement.ratio_bin]} thing at "
        f"{vocab['vertical'][statement.vertical_bin]} "
        f"{vocab['horizontal'][statement.horizontal_bin]}"
    )


def _tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.strip().split():
        token = raw.strip("'\"").rstrip(".").strip("'\"").lower()
        if token:
            tokens.append(token)
    return tokens


def _match(token: str, words: Sequence[str]) -> Optional[int]:
    try:
        return words.index(token)
    except ValueError:
        return None


def parse_statement(text: str, bins_per_property: int = 3) -> Statement:
    """Parse one statement text back into its bins.

    Case-insensitive; the word "thing" and a trailing period are optional,
    and a lone middle position ("at center") fills in the middle horizontal
    bin. Any unknown word raises ParseError naming the token and its
    position.
    """
    vocab = vocabulary(bins_per_property)
    tokens = _tokenize(text)
    pos = 0

    def take(expected: str) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError(f"unexpected end of statement, expected {expected}",
                             position=pos)
        token = tokens[pos]
        pos += 1
        return token

    token = take("a color word")
    if token == ANY_COLOR_WORD:
        color: Optional[int] = None
    else:
        color = _match(token, COLOR_NAMES)
        if color is None:
            raise ParseError(f"unknown color word {token!r}", token=token, position=pos - 1)

    token = take("a size word")
    size_bin = _match(token, vocab["size"])
    if size_bin is None:
        raise ParseError(f"unknown size word {token!r}", token=token, position=pos - 1)

    token = take("a shape word")
    ratio_bin = _match(token, vocab["ratio"])
    if ratio_bin is None:
        raise ParseError(f"unknown shape word {token!r}", token=token, position=pos - 1)

    token = take("'thing' or 'at'")
    if token == "thing":
        token = take("'at'")
    if token != "at":
        raise ParseError(f"expected 'at', got {token!r}", token=token, position=pos - 1)

    token = take("a vertical position word")
    vertical_bin = _match(token, vocab["vertical"])
    if vertical_bin is None:
        raise ParseError(f"unknown vertical position word {token!r}",
                         token=token, position=pos - 1)

    if pos >= len(tokens):
        # "at center" with no horizontal word: legal only for the exact
        # middle vertical bin, which then implies the middle horizontal bin.
        middle = bins_per_property // 2
        if bins_per_property % 2 == 1 and vertical_bin == middle:
            horizontal_bin = middle
        else:
            raise ParseError("missing horizontal position word", position=pos)
    else:
        token = take("a horizontal position word")
        horizontal_bin = _match(token, vocab["horizontal"])
        if horizontal_bin is None:
            raise ParseError(f"unknown horizontal position word {token!r}",
                             token=token, position=pos - 1)

    if pos < len(tokens):
        raise ParseError(f"unexpected trailing token {tokens[pos]!r}",
                         token=tokens[pos], position=pos)

    return Statement(
        horizontal_bin=horizontal_bin,
        vertical_bin=vertical_bin,
        size_bin=size_bin,
        ratio_bin=ratio_bin,
        color=color,
    )


# --- histograms --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StatementHistogram:
    """Dense non-negative counts over every statement combination."""

    bins_per_property: int
    counts: np.ndarray
    mask: PropertyMask = FULL_MASK

    def __post_init__(self):
        expected = histogram_length(self.bins_per_property, self.mask)
        if self.counts.shape != (expected,):
            raise ValueError(
                f"histogram length {self.counts.shape} does not match "
                f"B={self.bins_per_property}, mask={sorted(self.mask.names)} (expected {expected})")
        if np.any(self.counts < 0):
            raise ValueError("histogram counts must be non-negative")

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def normalized(self) -> np.ndarray:
        """L1-normalized copy of the counts; all-zero stays all-zero."""
        total = self.counts.sum()
        if total == 0:
            return np.zeros_like(self.counts)
        return self.counts / total

    def compatible_with(self, other: "StatementHistogram") -> bool:
        return (self.bins_per_property == other.bins_per_property
                and self.mask.names == other.mask.names)


def empty_histogram(bins_per_property: int, mask: PropertyMask = FULL_MASK) -> StatementHistogram:
    return StatementHistogram(
        bins_per_property=bins_per_property,
        counts=np.zeros(histogram_length(bins_per_property, mask)),
        mask=mask,
    )


def _add_statement(counts: np.ndarray, statement: Statement,
                   bins_per_property: int, mask: PropertyMask, weight: float = 1.0) -> None:
    if mask.has_color and statement.color is None:
        # Wildcard color: spread the count uniformly over the 11 color slices.
        for c in range(N_COLORS):
            idx = statement_index(
                Statement(statement.horizontal_bin, statement.vertical_bin,
                          statement.size_bin, statement.ratio_bin, c),
                bins_per_property, mask)
            counts[idx] += weight / N_COLORS
    else:
        counts[statement_index(statement, bins_per_property, mask)] += weight


def histogram_from_syntax(syntax: SyntaxMatrix, boundaries: BinBoundaries,
                          mask: PropertyMask = FULL_MASK) -> StatementHistogram:
    """Count every window of an image into its statement bin."""
    counts = np.zeros(histogram_length(boundaries.bins_per_property, mask))
    for window in syntax.rows:
        statement = quantize_window(window, boundaries)
        if mask.has_color and statement.color is None:
            raise ValueError(f"window in {syntax.image_id} has no color")
        _add_statement(counts, statement, boundaries.bins_per_property, mask)
    return StatementHistogram(boundaries.bins_per_property, counts, mask)


def histogram_from_statements(texts: Iterable[str], bins_per_property: int,
                              mask: PropertyMask = FULL_MASK) -> StatementHistogram:
    """Reverse direction: accumulate parsed statement texts into a histogram.

    Parse failures are re-raised with the 1-based line number of the
    offending text attached.
    """
    counts = np.zeros(histogram_length(bins_per_property, mask))
    for line_no, text in enumerate(texts, start=1):
        try:
            statement = parse_statement(text, bins_per_property)
        except ParseError as err:
            err.line = line_no
            raise
        _add_statement(counts, statement, bins_per_property, mask)
    return StatementHistogram(bins_per_property, counts, mask)
