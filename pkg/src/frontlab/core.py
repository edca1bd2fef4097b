"""State algebra: configurations, order statistics, spacings and the jump map.

Labels are 1-based in every public signature (particle ``1`` is
``positions[0]``).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from frontlab.errors import InvalidArgumentError


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Configuration:
    """Positions of ``n`` labelled particles at one instant."""

    positions: np.ndarray

    def __post_init__(self):
        pos = _frozen(self.positions)
        if pos.size == 0:
            raise InvalidArgumentError("a configuration needs at least one particle")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return int(self.positions.size)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.positions, other.positions)

    def __hash__(self):
        return hash(self.positions.tobytes())

    def __add__(self, shift: float) -> "Configuration":
        return Configuration(self.positions + float(shift))

    def position(self, label: int) -> float:
        _check_label(label, self.n)
        return float(self.positions[label - 1])

    @classmethod
    def zeros(cls, n: int) -> "Configuration":
        return cls(np.zeros(int(n)))

    def require_interacting(self) -> "Configuration":
        if self.n < 2:
            raise InvalidArgumentError(
                f"interacting dynamics need n >= 2 particles (got n={self.n}); "
                "with one particle the partner law is undefined"
            )
        return self

    # serialisation -------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "position"])
        for k, x in enumerate(self.positions, start=1):
            w.writerow([k, repr(float(x))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Configuration":
        rows = list(csv.DictReader(io.StringIO(text)))
        labels = [int(r["label"]) for r in rows]
        if sorted(labels) != list(range(1, len(labels) + 1)):
            raise InvalidArgumentError("labels must be a permutation of 1..n")
        pos = np.empty(len(rows))
        for lab, r in zip(labels, rows):
            pos[lab - 1] = float(r["position"])
        return cls(pos)

    def to_json(self) -> str:
        return json.dumps([float(x) for x in self.positions])

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        return cls(json.loads(text))


@dataclass(frozen=True, eq=False)
class OrderedView:
    values: np.ndarray
    labels: np.ndarray  # 1-based, rank -> label

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "labels", _frozen(self.labels, dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def rank_of(self, label: int) -> int:
        return int(np.flatnonzero(self.labels == label)[0]) + 1

    def to_configuration(self) -> Configuration:
        pos = np.empty_like(self.values)
        pos[self.labels - 1] = self.values
        return Configuration(pos)


@dataclass(frozen=True, eq=False)
class SpacingConfiguration:
    """Successive gaps ``xi[k+1] - xi[k]`` of the ordered positions."""

    gaps: np.ndarray

    def __post_init__(self):
        gaps = _frozen(self.gaps)
        if np.any(gaps < 0):
            raise InvalidArgumentError("gaps must be nonnegative")
        object.__setattr__(self, "gaps", gaps)

    @property
    def n(self) -> int:
        return int(self.gaps.size) + 1

    @property
    def eta(self) -> np.ndarray:
        """Distances of the ordered particles 2..n from the leftmost one."""
        return np.cumsum(self.gaps)

    def dominated_by(self, other: "SpacingConfiguration") -> bool:
        return bool(np.all(self.gaps <= other.gaps))

    def __eq__(self, other):
        if not isinstance(other, SpacingConfiguration):
            return NotImplemented
        return np.array_equal(self.gaps, other.gaps)

    __hash__ = None


def _check_label(label: int, n: int) -> None:
    if not (1 <= int(label) <= n):
        raise InvalidArgumentError(f"label {label} out of range 1..{n}")


def apply_theta(config: Configuration, i: int, j: int) -> Configuration:
    """Move the lower of particles ``i`` and ``j`` onto the higher one."""
    n = config.n
    _check_label(i, n)
    _check_label(j, n)
    if i == j:
        raise InvalidArgumentError("theta needs two distinct labels")
    pos = np.array(config.positions)
    top = max(pos[i - 1], pos[j - 1])
    pos[i - 1] = top
    pos[j - 1] = top
    return Configuration(pos)


def order_statistics(config: Configuration) -> OrderedView:
    # stable sort on positions == tie-break by ascending label
    order = np.argsort(config.positions, kind="stable")
    return OrderedView(config.positions[order], order + 1)


def seen_from_leftmost(config: Configuration) -> SpacingConfiguration:
    if config.n < 2:
        raise InvalidArgumentError("spacings need n >= 2")
    values = np.sort(config.positions)
    return SpacingConfiguration(np.diff(values))


def theta_ranks(sorted_values: np.ndarray, low_rank: int, high_rank: int) -> np.ndarray:
    """Apply the jump map to ranks of an already sorted vector and re-sort.

    Ranks are 1-based with ``low_rank < high_rank``.
    """
    n = sorted_values.size
    if not (1 <= low_rank < high_rank <= n):
        raise InvalidArgumentError(f"malformed rank pair ({low_rank}, {high_rank}) for n={n}")
    out = np.array(sorted_values, dtype=np.float64)
    out[low_rank - 1] = max(out[low_rank - 1], out[high_rank - 1])
    return np.sort(out)
