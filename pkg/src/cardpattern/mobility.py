"""Region-pattern scoring: path matrix supports, association rules and the
first-order adjacency baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import CardPatternError


class EmptyPath(CardPatternError):
    pass


@dataclass(frozen=True)
class PathMatrix:
    """Zero-padded region rows; 0 is padding and only trails a row."""

    rows: tuple
    region_count: int

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[int]], width: Optional[int] = None) -> "PathMatrix":
        rows = [tuple(int(a) for a in r) for r in rows]
        rows = [r for r in rows if r]
        if not rows:
            raise EmptyPath("no regions given")
        for r in rows:
            if min(r) < 1:
                raise ValueError("regions must be >= 1 (0 is padding)")
        width = width or max(len(r) for r in rows)
        if any(len(r) > width for r in rows):
            raise ValueError("row longer than matrix width")
        padded = tuple(r + (0,) * (width - len(r)) for r in rows)
        return cls(padded, max(max(r) for r in rows))

    @property
    def width(self) -> int:
        return len(self.rows[0])

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=int)

    def segments(self):
        """Each row without its trailing padding."""
        for r in self.rows:
            k = len(r)
            while k and r[k - 1] == 0:
                k -= 1
            yield r[:k]


def build_path_matrix(path: Sequence[int], row_len: int = 10) -> PathMatrix:
    """Chunk `path` row-major into rows of `row_len`; pad the last row."""
    path = [int(a) for a in path]
    if not path:
        raise EmptyPath("path is empty")
    if row_len < 1:
        raise ValueError("row_len must be >= 1")
    chunks = [path[i:i + row_len] for i in range(0, len(path), row_len)]
    return PathMatrix.from_rows(chunks, width=row_len)


def min_extraneous(row: Sequence[int], pattern: Sequence[int]) -> Optional[int]:
    """Fewest extraneous elements over order-preserving embeddings.

    For each occurrence of the first element, matching the rest greedily
    (earliest possible position) yields the tightest embedding starting
    there. Returns None when the pattern does not embed.
    """
    n = len(pattern)
    best = None
    first = pattern[0]
    for s, a in enumerate(row):
        if a != first:
            continue
        pos = s
        for b in pattern[1:]:
            pos += 1
            while pos < len(row) and row[pos] != b:
                pos += 1
            if pos >= len(row):
                break
        else:
            t = pos - s + 1 - n
            if best is None or t < best:
                best = t
                if t == 0:
                    break
    return best


def row_support(row: Sequence[int], pattern: Sequence[int]) -> float:
    t = min_extraneous(row, pattern)
    return 0.0 if t is None else 1.0 / (1.0 + t)


def support(matrix: PathMatrix, pattern: Sequence[int]) -> float:
    """Sum over rows of 1 (contiguous), 1/(1+t) (t interleaved extras) or 0."""
    pattern = tuple(int(a) for a in pattern)
    if not pattern or min(pattern) < 1:
        raise ValueError("pattern must be non-empty with regions >= 1")
    return float(sum(row_support(seg, pattern) for seg in matrix.segments()))


def rule_confidence(matrix: PathMatrix, antecedent: Sequence[int], consequent: Sequence[int]) -> float:
    denom = support(matrix, antecedent)
    if denom == 0:
        return 0.0
    return 100.0 * support(matrix, tuple(antecedent) + tuple(consequent)) / denom


def region_confidence_assoc(matrix: PathMatrix, prev2: Optional[int], prev1: Optional[int],
                            new: int) -> float:
    """Best confidence among the rules that end at the new region.

    With context <prev2, prev1, new> the rules are <prev2> -> <prev1, new>,
    <prev2, prev1> -> <new> and <prev1> -> <new>.
    """
    if prev1 is None:
        return 0.0
    scores = [rule_confidence(matrix, (prev1,), (new,))]
    if prev2 is not None:
        scores.append(rule_confidence(matrix, (prev2,), (prev1, new)))
        scores.append(rule_confidence(matrix, (prev2, prev1), (new,)))
    return max(scores)


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Row-normalised transition probabilities; index [i, j] is P(j | i).

    Row/column 0 is unused so region ids index directly.
    """

    probs: np.ndarray

    @property
    def region_count(self) -> int:
        return self.probs.shape[0] - 1


def build_adjacency(rows) -> AdjacencyMatrix:
    """Transition counts within each row segment, normalised per source.

    `rows` is a `PathMatrix` or an iterable of region sequences; transitions
    never cross from one row into the next.
    """
    segments = list(rows.segments()) if isinstance(rows, PathMatrix) else [list(r) for r in rows]
    segments = [[a for a in s if a != 0] for s in segments]
    if not any(segments):
        raise EmptyPath("no regions given")
    size = max(max(s) for s in segments if s)
    counts = np.zeros((size + 1, size + 1))
    for seg in segments:
        for a, b in zip(seg[:-1], seg[1:]):
            counts[a, b] += 1
    totals = counts.sum(axis=1, keepdims=True)
    probs = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
    return AdjacencyMatrix(probs)


def region_confidence_adj(matrix: AdjacencyMatrix, prev1: Optional[int], new: int) -> float:
    if prev1 is None or prev1 > matrix.region_count or new > matrix.region_count:
        return 0.0
    return 100.0 * float(matrix.probs[prev1, new])
