"""Fractal measures and dimensions of finite unions of intervals on the line.

Sets are represented as finite unions of disjoint closed intervals (points are
degenerate intervals).  Genuine fractals enter as finite-level prefixes, e.g.
:func:`cantor_prefix`.

Conventions
-----------
* Balls have radius ``eta``, i.e. they are closed intervals of length ``2*eta``.
  Box conventions differ by a constant factor and give the same dimensions.
* ``0**0 == 1``: the 0-dimensional pre-measure counts covering pieces.
* Covers for the Hausdorff pre-measure must have diameter strictly below
  ``eta``; internally pieces have diameter at most ``eta * (1 - 2**-40)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

Interval = Tuple[float, float]

#: relative shrink applied to ``eta`` so that "diam < eta" stays well posed
STRICT_SHRINK = 2.0**-40
#: relative slack when deciding whether a ball reaches an endpoint
BALL_SLACK = 1e-9


class FractalParameterError(ValueError):
    """Invalid parameter passed to a fractal estimator."""


@dataclass(frozen=True)
class FractalSet:
    """Finite union of disjoint closed intervals inside a time window."""

    intervals: Tuple[Interval, ...] = ()
    window: Optional[Interval] = None

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        for lo, hi in ivs:
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise FractalParameterError(f"non-finite endpoint in ({lo}, {hi})")
            if lo > hi:
                raise FractalParameterError(f"interval ({lo}, {hi}) has lo > hi")
        for (lo0, hi0), (lo1, _) in zip(ivs, ivs[1:]):
            if lo1 <= hi0:
                raise FractalParameterError(
                    "intervals must be sorted and pairwise disjoint "
                    f"(got ({lo0}, {hi0}) before starting at {lo1})"
                )
        window = self.window
        if window is None:
            window = (ivs[0][0], ivs[-1][1]) if ivs else (0.0, 0.0)
        window = (float(window[0]), float(window[1]))
        if ivs and (ivs[0][0] < window[0] or ivs[-1][1] > window[1]):
            raise FractalParameterError(f"intervals leave the window {window}")
        object.__setattr__(self, "intervals", ivs)
        object.__setattr__(self, "window", window)

    @classmethod
    def from_points(cls, points: Iterable[float], window=None) -> "FractalSet":
        pts = sorted(set(float(p) for p in points))
        return cls(tuple((p, p) for p in pts), window)

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]], window=None) -> "FractalSet":
        """Build a set from possibly overlapping, unsorted intervals (they are merged)."""
        ivs = sorted((float(a), float(b)) for a, b in intervals)
        merged: List[List[float]] = []
        for lo, hi in ivs:
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple((lo, hi) for lo, hi in merged), window)

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def lebesgue(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    def contains(self, other: "FractalSet") -> bool:
        """True if every component of ``other`` lies inside a component of self."""
        j = 0
        for lo, hi in other.intervals:
            while j < len(self.intervals) and self.intervals[j][1] < lo:
                j += 1
            if j == len(self.intervals):
                return False
            a, b = self.intervals[j]
            if not (a <= lo and hi <= b):
                return False
        return True


@dataclass
class CoverEstimate:
    s: float
    eta: float
    value: float
    cover: List[Interval] = field(default_factory=list)

    def to_record(self) -> dict:
        return {"s": self.s, "eta": self.eta, "value": self.value, "cover": [list(c) for c in self.cover]}

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


@dataclass
class DimensionFit:
    scales: List[float]
    log_counts: List[float]
    slope: float
    intercept: float
    r_squared: float
    dimension: float
    counts: List[int] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "scales": self.scales,
            "counts": self.counts,
            "log_counts": self.log_counts,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "dimension": self.dimension,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not (eta > 0 and math.isfinite(eta)):
        raise FractalParameterError(f"eta must be a positive finite real, got {eta}")
    return eta


def _check_s(s: float) -> float:
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise FractalParameterError(f"s must lie in [0, 1], got {s}")
    return s


# --------------------------------------------------------------------------
# Minkowski side: ball counts and contents
# --------------------------------------------------------------------------

def ball_cover(A: FractalSet, eta: float) -> List[Interval]:
    """Minimal cover of ``A`` by closed balls of radius ``eta``.

    Greedy left-to-right sweep; each ball starts at the leftmost uncovered
    point, which is optimal on the line.
    """
    eta = _check_eta(eta)
    width = 2.0 * eta
    reach = width * (1.0 + BALL_SLACK)
    cover: List[Interval] = []
    covered_to = -math.inf
    for lo, hi in A.intervals:
        if hi <= covered_to:
            continue
        start = lo if lo > covered_to else covered_to
        # number of balls needed to sweep [start, hi]
        m = max(1, math.ceil((hi - start) / width - BALL_SLACK))
        if start + (m - 1) * width + reach < hi:
            m += 1
        for i in range(m):
            a = start + i * width
            cover.append((a, a + width))
        covered_to = start + (m - 1) * width + reach
    return cover


def ball_count(A: FractalSet, eta: float) -> int:
    """Minimal number of radius-``eta`` balls covering ``A``."""
    return len(ball_cover(A, eta))


def minkowski_content(A: FractalSet, s: float, etas: Sequence[float]) -> List[Tuple[float, float]]:
    """Finite-scale sequence ``(eta, eta**s * N(A, eta))``; no extrapolation."""
    s = _check_s(s)
    etas = [_check_eta(e) for e in etas]
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise FractalParameterError("etas must be strictly decreasing")
    return [(e, e**s * ball_count(A, e)) for e in etas]


def dimension_fit(A: FractalSet, etas: Sequence[float]) -> DimensionFit:
    """Least-squares slope of ``log N(A, eta)`` against ``log(1/eta)``."""
    etas = [_check_eta(e) for e in etas]
    if len(etas) < 3:
        raise FractalParameterError(f"dimension_fit needs at least 3 scales, got {len(etas)}")
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise FractalParameterError("etas must be strictly decreasing")
    counts = [ball_count(A, e) for e in etas]
    if min(counts) == 0:
        raise FractalParameterError("cannot fit a dimension to the empty set")
    x = np.log(1.0 / np.asarray(etas))
    y = np.log(np.asarray(counts, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    # a constant count sequence is fitted exactly by a flat line
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    slope = float(slope)
    if abs(slope) < 1e-12:
        slope = 0.0
    return DimensionFit(
        scales=list(etas),
        log_counts=[float(v) for v in y],
        slope=slope,
        intercept=float(intercept),
        r_squared=r2,
        dimension=min(1.0, max(0.0, slope)),
        counts=counts,
    )


# --------------------------------------------------------------------------
# Hausdorff side: exact pre-measure by dynamic programming
# --------------------------------------------------------------------------

def _piece_cost(diam: float, s: float) -> float:
    return 1.0 if s == 0.0 else diam**s


def _run_count(length: float, eta_eff: float) -> Tuple[int, float]:
    """Full pieces and remainder of the cheapest tiling of a segment."""
    if length <= 0.0:
        return 0, 0.0
    full = math.floor(length / eta_eff)
    rem = length - full * eta_eff
    if rem < 0.0:  # round-off in floor division
        full -= 1
        rem = length - full * eta_eff
    return full, rem


def _run_cost(length: float, s: float, eta_eff: float) -> Tuple[float, int]:
    """Cost and piece count of the cheapest tiling of a segment of ``length``
    by pieces of diameter <= eta_eff.

    With a concave cost an optimum uses as many full pieces as fit plus one
    remainder piece (a degenerate segment still needs one piece).
    """
    full, rem = _run_count(length, eta_eff)
    extra = 1 if (rem > 0.0 or full == 0) else 0
    return full * _piece_cost(eta_eff, s) + extra * _piece_cost(rem, s), full + extra


def _run_pieces(length: float, eta_eff: float) -> List[float]:
    full, rem = _run_count(length, eta_eff)
    pieces = [eta_eff] * full
    if rem > 0.0 or full == 0:
        pieces.append(rem)
    return pieces


def hausdorff_premeasure(A: FractalSet, s: float, eta: float) -> CoverEstimate:
    """Exact ``inf sum diam(I_j)**s`` over covers by intervals of diameter < eta.

    Any cover splits into maximal connected runs; each run spans a block of
    consecutive components and costs at least the best tiling of its hull.
    A dynamic program over block partitions gives the exact infimum.
    Ties prefer fewer pieces, then the leftmost block split.
    """
    s = _check_s(s)
    eta = _check_eta(eta)
    eta_eff = eta * (1.0 - STRICT_SHRINK)
    comps = A.intervals
    m = len(comps)
    if m == 0:
        return CoverEstimate(s, eta, 0.0, [])
    # best[j] = (cost, n_pieces, split) for the first j components
    best: List[Tuple[float, int, int]] = [(0.0, 0, -1)] + [(math.inf, 0, -1)] * m
    for j in range(1, m + 1):
        hi = comps[j - 1][1]
        cand = best[j]
        for i in range(j - 1, -1, -1):
            cost, count = _run_cost(hi - comps[i][0], s, eta_eff)
            if cost > cand[0]:
                # run cost grows as the block extends left; nothing cheaper remains
                break
            total = best[i][0] + cost
            n_pieces = best[i][1] + count
            key = (total, n_pieces)
            if key < (cand[0], cand[1]) or (key == (cand[0], cand[1]) and i < cand[2]):
                cand = (total, n_pieces, i)
        best[j] = cand
    cover: List[Interval] = []
    j = m
    while j > 0:
        i = best[j][2]
        lo, hi = comps[i][0], comps[j - 1][1]
        pieces = _run_pieces(hi - lo, eta_eff)
        run: List[Interval] = []
        a = lo
        for idx, p in enumerate(pieces):
            # pin the last piece to the hull end so rounding never leaves a gap
            run.append((a, hi if idx == len(pieces) - 1 else min(a + p, hi)))
            a += p
        cover[:0] = run
        j = i
    return CoverEstimate(s, eta, best[m][0], cover)


def hausdorff_premeasure_bruteforce(A: FractalSet, s: float, eta: float) -> float:
    """Exhaustive reference for :func:`hausdorff_premeasure` (small sets only).

    Enumerates every split of the components into consecutive blocks and, for
    each block hull, every vertex of the piece-length polytope
    ``{0 <= l_i <= eta, sum l_i = L}``.
    """
    s = _check_s(s)
    eta = _check_eta(eta)
    eta_eff = eta * (1.0 - STRICT_SHRINK)
    comps = A.intervals
    m = len(comps)
    if m == 0:
        return 0.0
    if m > 16:
        raise FractalParameterError("brute force limited to 16 components")

    def hull_cost(length: float) -> float:
        if length <= 0.0:
            return _piece_cost(0.0, s)
        need = math.ceil(length / eta_eff)
        best = math.inf
        for k in range(max(need, 1), need + 3):
            # vertices: `a` pieces at eta_eff, one free piece, rest empty
            for a in range(k + 1):
                r = length - a * eta_eff
                if r < -1e-15 * length or r > eta_eff:
                    continue
                r = max(r, 0.0)
                free = [r] if (r > 0.0 or a == 0) else []
                c = a * _piece_cost(eta_eff, s) + sum(_piece_cost(p, s) for p in free)
                best = min(best, c)
        return best

    best = math.inf
    for cuts in product((False, True), repeat=m - 1):
        total = 0.0
        start = 0
        for idx in range(m):
            if idx == m - 1 or cuts[idx]:
                total += hull_cost(comps[idx][1] - comps[start][0])
                start = idx + 1
        best = min(best, total)
    return best


# --------------------------------------------------------------------------
# Vitali covering
# --------------------------------------------------------------------------

def vitali_subcover(centers: Sequence[float], radius: float) -> List[int]:
    """Greedy 1-D Vitali selection.

    Selected centers are pairwise at distance >= 2*radius and the balls of
    radius 5*radius around them cover every input center.  Returns indices
    into ``centers`` in increasing position order.
    """
    radius = float(radius)
    if not radius > 0:
        raise FractalParameterError(f"radius must be positive, got {radius}")
    order = sorted(range(len(centers)), key=lambda i: (centers[i], i))
    chosen: List[int] = []
    last = -math.inf
    for i in order:
        c = float(centers[i])
        if c - last >= 2.0 * radius:
            chosen.append(i)
            last = c
    return chosen


# --------------------------------------------------------------------------
# Generators, property helpers and I/O
# --------------------------------------------------------------------------

def cantor_prefix(level: int, lo: float = 0.0, hi: float = 1.0) -> FractalSet:
    """Level-``level`` middle-thirds Cantor prefix on ``[lo, hi]``.

    Endpoints are built from integer numerators so that all intervals have
    the same floating length up to one rounding.
    """
    if level < 0:
        raise FractalParameterError("level must be >= 0")
    nums = [0]
    for _ in range(level):
        nums = [3 * a for a in nums] + [3 * a + 2 for a in nums]
    nums.sort()
    den = 3**level
    width = hi - lo
    ivs = tuple((lo + width * a / den, lo + width * (a + 1) / den) for a in nums)
    return FractalSet(ivs, (lo, hi))


def measure_gap_check(A: FractalSet, s: float, t: float, etas: Sequence[float], growth: float = 2.0**0.8) -> dict:
    """Discrete check that a bounded ``eta**s N`` forces ``eta**t N`` to decay.

    The ``s``-sequence counts as bounded when its last/first ratio is at most
    ``growth**(t - s)``.  The decay factor of the ``t``-sequence between the
    first and last scale is then at least
    ``(eta_first/eta_last)**(t - s) / growth**(t - s)``.
    """
    s, t = _check_s(s), _check_s(t)
    if not s < t:
        raise FractalParameterError("need s < t")
    seq_s = minkowski_content(A, s, etas)
    seq_t = minkowski_content(A, t, etas)
    ratio_s = seq_s[-1][1] / seq_s[0][1]
    bounded = ratio_s <= growth ** (t - s)
    decay = seq_t[0][1] / seq_t[-1][1]
    required = (etas[0] / etas[-1]) ** (t - s) / growth ** (t - s)
    return {"bounded": bounded, "decay": decay, "required": required, "holds": (not bounded) or decay >= required}


def read_point_set(path, window=None) -> FractalSet:
    """Read a point-set file.

    One real per line (a point) or ``lo hi`` per line (an interval); blank
    lines and lines starting with ``#`` are ignored.
    """
    ivs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) == 1:
                v = float(parts[0])
                ivs.append((v, v))
            elif len(parts) == 2:
                ivs.append((float(parts[0]), float(parts[1])))
            else:
                raise FractalParameterError(f"{path}:{lineno}: expected 1 or 2 numbers")
    return FractalSet.from_intervals(ivs, window)


def write_point_set(A: FractalSet, path) -> None:
    with open(path, "w") as fh:
        fh.write("# lo hi\n")
        for lo, hi in A.intervals:
            if lo == hi:
                fh.write(f"{lo!r}\n")
            else:
                fh.write(f"{lo!r} {hi!r}\n")
