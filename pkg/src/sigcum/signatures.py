"""Signatures of discrete drivers: products of exponentials of T_0-valued increments."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

from .algebra import (
    FLOAT,
    RATIONAL,
    TensorSeries,
    UsageError,
    exp_series,
    group_inverse,
    log_series,
    parse_rational,
)

CONTINUOUS = "segment"
JUMP = "jump"


@dataclass(frozen=True)
class DrivePath:
    """A driver stored by its increments; increment j is X_j - X_{j-1}."""

    dim: int
    level: int
    increments: tuple[TensorSeries, ...]
    times: tuple | None = None
    tags: tuple[str, ...] | None = None
    scalar: str = RATIONAL

    def __post_init__(self):
        object.__setattr__(self, "increments", tuple(self.increments))
        for inc in self.increments:
            if (inc.dim, inc.level, inc.scalar) != (self.dim, self.level, self.scalar):
                raise UsageError("increment incompatible with path")
            if inc.scalar_part != 0:
                raise UsageError("increments must lie in T_0")
        if self.times is not None:
            times = tuple(self.times)
            if len(times) != len(self.increments) + 1:
                raise UsageError("need one time stamp per point (increments + 1)")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise UsageError("time stamps must be strictly increasing")
            object.__setattr__(self, "times", times)
        if self.tags is not None:
            tags = tuple(self.tags)
            if len(tags) != len(self.increments) or any(t not in (CONTINUOUS, JUMP) for t in tags):
                raise UsageError("tags must be 'segment' or 'jump', one per increment")
            object.__setattr__(self, "tags", tags)

    @property
    def steps(self) -> int:
        return len(self.increments)

    @classmethod
    def from_points(cls, points: Sequence[Sequence], level: int, scalar: str = RATIONAL,
                    times: Sequence | None = None) -> DrivePath:
        """Piecewise-linear path through points of R^d, as level-1 increments."""
        if not points:
            raise UsageError("need at least one point")
        dim = len(points[0])
        incs = []
        for a, b in zip(points, points[1:]):
            incs.append(TensorSeries.from_vector([bi - ai for ai, bi in zip(a, b)], level, scalar))
        return cls(dim, level, tuple(incs), None if times is None else tuple(times), scalar=scalar)

    @classmethod
    def from_increments(cls, increments: Sequence[TensorSeries], tags: Sequence[str] | None = None,
                        dim: int | None = None, level: int | None = None,
                        scalar: str | None = None) -> DrivePath:
        if increments:
            ref = increments[0]
            dim, level, scalar = ref.dim, ref.level, ref.scalar
        elif dim is None or level is None:
            raise UsageError("empty path needs explicit dim and level")
        return cls(dim, level, tuple(increments), tags=None if tags is None else tuple(tags),
                   scalar=scalar or RATIONAL)

    def reversed(self) -> DrivePath:
        return DrivePath(self.dim, self.level, tuple(-x for x in reversed(self.increments)), scalar=self.scalar)


def _check_range(path: DrivePath, s: int, t: int) -> None:
    if not 0 <= s <= t <= path.steps:
        raise UsageError(f"need 0 <= s <= t <= {path.steps}, got s={s}, t={t}")


def signature(path: DrivePath, s: int = 0, t: int | None = None) -> TensorSeries:
    """prod_{j=s+1..t} exp(increment_j)."""
    t = path.steps if t is None else t
    _check_range(path, s, t)
    out = TensorSeries.one(path.dim, path.level, path.scalar)
    for inc in path.increments[s:t]:
        out = out * exp_series(inc)
    return out


def log_signature(path: DrivePath, s: int = 0, t: int | None = None) -> TensorSeries:
    return log_series(signature(path, s, t))


def marcus_signature(path: DrivePath, s: int = 0, t: int | None = None) -> TensorSeries:
    """Signature of a path mixing segments and jumps.

    A jump of size x contributes the factor exp(x), exactly as a segment with
    the same increment does; the tags only label increments for reporting.
    """
    return signature(path, s, t)


class SignaturePrefix:
    """Cached prefix products for repeated interval queries on one path."""

    def __init__(self, path: DrivePath):
        self.path = path
        prefix = [TensorSeries.one(path.dim, path.level, path.scalar)]
        for inc in path.increments:
            prefix.append(prefix[-1] * exp_series(inc))
        self.prefix = tuple(prefix)
        self._inverse: dict[int, TensorSeries] = {}

    def inverse(self, j: int) -> TensorSeries:
        if j not in self._inverse:
            self._inverse[j] = group_inverse(self.prefix[j])
        return self._inverse[j]

    def __call__(self, s: int, t: int) -> TensorSeries:
        _check_range(self.path, s, t)
        if s == 0:
            return self.prefix[t]
        return self.inverse(s) * self.prefix[t]


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass
class CsvPath:
    times: list
    points: list[list]
    dim: int
    errors: list[str] = field(default_factory=list)


def read_csv_path(text: str, scalar: str = FLOAT) -> CsvPath:
    """Parse "t,x1,...,xd" CSV text; raises UsageError listing bad lines."""
    conv = float if scalar == FLOAT else parse_rational
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise UsageError("line 1: empty CSV, expected header t,x1,...,xd")
    lineno, header = rows[0]
    header = [h.strip() for h in header]
    dim = len(header) - 1
    expected = ["t"] + [f"x{i}" for i in range(1, dim + 1)]
    if dim < 1 or header != expected:
        raise UsageError(f"line {lineno}: header must be {','.join(expected) if dim >= 1 else 't,x1,...,xd'}, "
                         f"got {','.join(header)}")
    errors: list[str] = []
    times, points = [], []
    for lineno, row in rows[1:]:
        if len(row) != dim + 1:
            errors.append(f"line {lineno}: expected {dim + 1} fields, got {len(row)}")
            continue
        try:
            vals = [conv(c.strip()) for c in row]
        except (ValueError, ZeroDivisionError):
            errors.append(f"line {lineno}: non-numeric field in {','.join(row)}")
            continue
        if scalar == FLOAT and any(v != v or v in (float("inf"), float("-inf")) for v in vals):
            errors.append(f"line {lineno}: non-finite value")
            continue
        if times and not vals[0] > times[-1]:
            errors.append(f"line {lineno}: time {row[0].strip()} not strictly greater than previous")
            continue
        times.append(vals[0])
        points.append(vals[1:])
    if errors:
        raise UsageError("; ".join(errors))
    if not points:
        raise UsageError(f"line {lineno}: no data rows")
    return CsvPath(times, points, dim)


def path_from_csv(text: str, level: int, scalar: str = FLOAT) -> DrivePath:
    parsed = read_csv_path(text, scalar)
    return DrivePath.from_points(parsed.points, level, scalar, times=parsed.times)


__all__ = [
    "CONTINUOUS", "JUMP", "DrivePath", "SignaturePrefix", "log_signature", "marcus_signature",
    "path_from_csv", "read_csv_path", "signature",
]
