"""Monte Carlo lifetime tails, singular-time proxies and bridges between modules.

The singular-time report is a numerical PROXY: a time is flagged when at
least a fraction ``epsilon`` of an ensemble has a chosen norm above a
threshold ``K``.  No equivalence with pathwise regularity classes is claimed.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import criticality as crit
from .fractal import DimensionFit, FractalSet, dimension_fit
from .spde import SimConfig, SimResult, simulate

PROXY_HEADER = "# PROXY: ensemble exceedance fraction >= epsilon of a norm threshold K (not a regularity class)"
N_BOOT = 1000


class ExperimentError(ValueError):
    """Bad experiment input (missing channel, empty or degenerate ensemble)."""


# --------------------------------------------------------------------------
# trajectories and lifetimes
# --------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Recorded times with one or more named norm channels."""

    times: np.ndarray
    channels: Dict[str, np.ndarray]

    def channel(self, name: str) -> np.ndarray:
        if name not in self.channels:
            raise ExperimentError(f"trajectory has no norm channel {name!r} (has {sorted(self.channels)})")
        return self.channels[name]


def norm_label(cfg: SimConfig) -> str:
    if cfg.norm_space == "Lq":
        return f"Lq:{cfg.norm_q:g}"
    if cfg.norm_space == "Hs":
        return f"Hs:{cfg.norm_s:g}"
    return "L2"


def trajectory_from_result(result: SimResult) -> Trajectory:
    """Norm channel of a solver run; a blow-up appends an infinite sample."""
    t = result.times
    v = result.norms
    if result.blowup is not None:
        t = np.append(t, result.config.dt * (result.blowup.step + 1))
        v = np.append(v, math.inf)
    return Trajectory(t, {norm_label(result.config): v})


def detect_lifetime(traj: Trajectory, threshold_k: float, norm_spec: str = "L2") -> float:
    """First time the norm reaches ``threshold_k``, linearly interpolated; ``inf`` if never."""
    v = traj.channel(norm_spec)
    t = traj.times
    if len(v) == 0:
        return math.inf
    if v[0] >= threshold_k:
        return float(t[0])
    hit = np.nonzero(v >= threshold_k)[0]
    if hit.size == 0:
        return math.inf
    i = int(hit[0])
    t0, t1, v0, v1 = float(t[i - 1]), float(t[i]), float(v[i - 1]), float(v[i])
    if not math.isfinite(v1):
        return t1
    return t0 + (threshold_k - v0) / (v1 - v0) * (t1 - t0)


def scalar_surrogate(x0: float, dt: float, t_end: float, sigma: float = 0.0,
                     rng: Optional[np.random.Generator] = None, ceiling: float = 1e12) -> Trajectory:
    """0-D surrogate ``dx = x^2 dt + sigma x dW`` (channel ``"abs"``).

    The drift is advanced by its exact flow ``x / (1 - x dt)``, followed by the
    exact geometric factor ``exp(sigma dW - sigma^2 dt / 2)``.  With
    ``sigma = 0`` the samples are exact: ``x(t) = x0 / (1 - x0 t)``.
    """
    if not dt > 0:
        raise ExperimentError("dt must be > 0")
    if sigma != 0 and rng is None:
        raise ExperimentError("a random generator is required when sigma != 0")
    n = int(round(t_end / dt))
    times = [0.0]
    vals = [abs(x0)]
    x = float(x0)
    for i in range(1, n + 1):
        denom = 1.0 - x * dt
        if denom <= 0:
            times.append(i * dt)
            vals.append(math.inf)
            break
        x = x / denom
        if sigma:
            x *= math.exp(sigma * math.sqrt(dt) * rng.standard_normal() - 0.5 * sigma**2 * dt)
        times.append(i * dt)
        if abs(x) > ceiling:
            vals.append(math.inf)
            break
        vals.append(abs(x))
    return Trajectory(np.array(times), {"abs": np.array(vals)})


class SurrogateRunner:
    """Picklable runner for the scalar surrogate; realization ``r`` gets its own stream."""

    norm_spec = "abs"

    def __init__(self, x0: float, dt: float, t_end: float, sigma: float = 0.0, seed: int = 0):
        self.x0, self.dt, self.t_end, self.sigma, self.seed = x0, dt, t_end, sigma, seed

    def __call__(self, realization: int) -> Trajectory:
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(realization,)))
        return scalar_surrogate(self.x0, self.dt, self.t_end, self.sigma, rng)

    def scaled(self, factor: float) -> "SurrogateRunner":
        return SurrogateRunner(self.x0 * factor, self.dt, self.t_end, self.sigma, self.seed)


class SolverRunner:
    """Picklable runner wrapping :func:`simulate`; realization index selects the RNG stream."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.norm_spec = norm_label(config)

    def __call__(self, realization: int) -> Trajectory:
        res = simulate(replace(self.config, realization=realization))
        return trajectory_from_result(res)

    def scaled(self, factor: float) -> "SolverRunner":
        return SolverRunner(replace(self.config, u0_amplitude=self.config.u0_amplitude * factor))


def run_ensemble(runner: Callable[[int], Trajectory], ensemble_size: int, jobs: int = 1) -> List[Trajectory]:
    """Run realizations ``0..ensemble_size-1``; results are ordered by index."""
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(runner, range(ensemble_size)))
    return [runner(r) for r in range(ensemble_size)]


# --------------------------------------------------------------------------
# tail estimation
# --------------------------------------------------------------------------

def ecdf(samples: Sequence[float], horizons: Sequence[float]) -> List[Tuple[float, float]]:
    """Fraction of samples with ``tau <= T``; survivors (``inf``) stay in the denominator."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = len(s)
    return [(float(T), float(np.searchsorted(s, T, side="right")) / n) for T in horizons]


def default_window(samples: Sequence[float]) -> Optional[Tuple[float, float]]:
    """Lowest decade of observed positive times, anchored at the 1% quantile."""
    s = np.asarray(samples, dtype=float)
    s = s[np.isfinite(s) & (s > 0)]
    if s.size == 0:
        return None
    lo = float(np.quantile(s, 0.01))
    return (lo, 10.0 * lo)


def fit_tail_exponent(samples: Sequence[float], window: Tuple[float, float]) -> float:
    """Slope of ``log P(tau <= T)`` against ``log T`` over the order statistics in ``window``.

    A step ecdf (all finite samples equal) has no finite slope: ``+inf``.
    Fewer than 3 distinct points in the window give ``nan``.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    n = len(s)
    finite = s[np.isfinite(s)]
    if finite.size and finite[0] == finite[-1] and finite[0] > 0:
        return math.inf
    lo, hi = window
    idx = np.nonzero((s >= lo) & (s <= hi) & (s > 0))[0]
    if idx.size == 0:
        return math.nan
    x = np.log(s[idx])
    y = np.log((idx + 1) / n)
    if np.unique(x).size < 3:
        return math.nan
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def bootstrap_ci(samples: Sequence[float], window: Tuple[float, float], fitted: float,
                 n_boot: int = N_BOOT, seed: int = 0) -> float:
    """One-sided 95% half-width: ``fitted`` minus the 5th bootstrap percentile."""
    if not math.isfinite(fitted):
        return 0.0
    s = np.asarray(samples, dtype=float)
    rng = np.random.default_rng(seed)
    slopes = []
    for _ in range(n_boot):
        b = fit_tail_exponent(s[rng.integers(0, len(s), len(s))], window)
        if math.isfinite(b):
            slopes.append(b)
    if not slopes:
        return math.inf
    return max(0.0, fitted - float(np.percentile(slopes, 5)))


@dataclass
class LifetimeEstimate:
    threshold_k: float
    norm_spec: str
    samples: List[float]
    ecdf: List[Tuple[float, float]]
    fitted_exponent: float
    ci: float
    window: Optional[Tuple[float, float]]
    envelope: List[Tuple[float, float]] = field(default_factory=list)
    soft_checks: Dict[str, bool] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["T", "ecdf", "envelope"])
        env = dict(self.envelope)
        for T, F in self.ecdf:
            w.writerow([repr(T), repr(F), repr(env[T]) if T in env else ""])
        return buf.getvalue()

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["realization", "tau"])
        for i, t in enumerate(self.samples):
            w.writerow([i, repr(float(t))])
        return buf.getvalue()

    def lines(self) -> List[str]:
        out = [
            f"threshold_k = {self.threshold_k!r}",
            f"norm = {self.norm_spec}",
            f"ensemble = {len(self.samples)}",
            f"survivors = {sum(1 for t in self.samples if math.isinf(t))}",
            f"fit_window = {self.window}",
            f"fitted_exponent = {self.fitted_exponent!r}",
            f"ci95_one_sided = {self.ci!r}",
        ]
        out += [f"soft_check {k} = {'pass' if v else 'FAIL'}" for k, v in sorted(self.soft_checks.items())]
        return out


def estimate_from_samples(samples: Sequence[float], threshold_k: float, horizons: Sequence[float],
                          norm_spec: str = "L2", window: Optional[Tuple[float, float]] = None,
                          seed: int = 0, n_boot: int = N_BOOT) -> LifetimeEstimate:
    samples = [float(t) for t in samples]
    if len(samples) < 2:
        raise ExperimentError("need at least 2 samples")
    win = window if window is not None else default_window(samples)
    if win is None:
        fitted, ci = math.nan, math.inf
    else:
        fitted = fit_tail_exponent(samples, win)
        ci = bootstrap_ci(samples, win, fitted, n_boot, seed) if math.isfinite(fitted) else 0.0
    F = ecdf(samples, sorted(horizons))
    mono = all(b[1] >= a[1] for a, b in zip(F, F[1:]))
    return LifetimeEstimate(threshold_k, norm_spec, samples, F, fitted, ci, win, soft_checks={"ecdf_monotone_in_T": mono})


def monte_carlo_tail(runner, ensemble_size: int, thresholds: Sequence[float], horizons: Sequence[float],
                     setting: Optional[crit.Setting] = None, C0: float = 1.0, N: Optional[float] = None,
                     jobs: int = 1, seed: int = 0, window: Optional[Tuple[float, float]] = None,
                     n_boot: int = N_BOOT) -> List[LifetimeEstimate]:
    """Lifetime estimates for each threshold from one ensemble.

    ``runner`` is a :class:`SimConfig` or a callable mapping a realization
    index to a :class:`Trajectory`.  The envelope ``C0 T^{p Exc} (1+N^p)`` uses
    ``setting`` (default: the 3D NSE weak setting at ``q = 3``) and ``N``
    (default: largest initial norm in the ensemble).
    """
    if ensemble_size < 2:
        raise ExperimentError("ensemble_size must be >= 2")
    if isinstance(runner, SimConfig):
        runner = SolverRunner(runner)
    norm_spec = getattr(runner, "norm_spec", "L2")
    trajs = run_ensemble(runner, ensemble_size, jobs)
    thresholds = sorted(thresholds)
    taus = np.array([[detect_lifetime(tr, k, norm_spec) for k in thresholds] for tr in trajs])
    if thresholds and np.all(taus[:, 0] == 0.0):
        raise ExperimentError("every realization crosses the lowest threshold at t = 0")
    setting = setting or crit.nse_weak_setting(3).setting(2)
    rep = crit.excess(setting)
    if N is None:
        N = max(float(tr.channel(norm_spec)[0]) for tr in trajs)
    out = []
    for j, k in enumerate(thresholds):
        est = estimate_from_samples(taus[:, j], k, horizons, norm_spec, window, seed, n_boot)
        if rep.exc >= 0:
            est.envelope = [
                (float(T), crit.lifetime_tail_bound(rep.exc, setting.p, N, T, C0)) for T in sorted(horizons) if T > 0
            ]
        if j > 0:
            est.soft_checks["pathwise_antitone_in_k"] = bool(np.all(taus[:, j - 1] <= taus[:, j]))
            prev = out[-1].ecdf
            est.soft_checks["ecdf_nonincreasing_in_k"] = all(b[1] <= a[1] for a, b in zip(prev, est.ecdf))
        out.append(est)
    return out


@dataclass
class ScalingCheck:
    mean_shift: float
    lower_95: float
    verdict: str


def initial_scaling_check(runner, ensemble_size: int, threshold_k: float, t_cap: float,
                          factor: float = 2.0, seed: int = 0, n_boot: int = N_BOOT) -> ScalingCheck:
    """Paired-seed check that scaling the initial data by ``factor`` shortens lifetimes.

    Statistic: mean of ``min(tau, t_cap)`` for the base data minus the scaled
    data on the same realizations; PASS iff its bootstrap 5th percentile is > 0
    or every pair is tied with both capped.
    """
    if isinstance(runner, SimConfig):
        runner = SolverRunner(runner)
    norm_spec = getattr(runner, "norm_spec", "L2")
    big = runner.scaled(factor)
    a = np.array([min(detect_lifetime(runner(r), threshold_k, norm_spec), t_cap) for r in range(ensemble_size)])
    b = np.array([min(detect_lifetime(big(r), threshold_k, norm_spec), t_cap) for r in range(ensemble_size)])
    diff = a - b
    rng = np.random.default_rng(seed)
    boots = [float(np.mean(diff[rng.integers(0, len(diff), len(diff))])) for _ in range(n_boot)]
    lower = float(np.percentile(boots, 5))
    ok = lower > 0 or (np.all(diff == 0) and np.all(a == t_cap))
    return ScalingCheck(float(np.mean(diff)), lower, "PASS" if ok else "FAIL")


@dataclass
class TailCheck:
    fitted_exponent: float
    predicted_exponent: Fraction
    ci: float
    verdict: str
    note: str = ""

    def lines(self) -> List[str]:
        out = [
            f"fitted_exponent = {self.fitted_exponent!r}",
            f"predicted p*Exc = {self.predicted_exponent}",
            f"ci95_one_sided = {self.ci!r}",
            f"verdict = {self.verdict}",
        ]
        if self.note:
            out.append(f"note = {self.note}")
        return out


def tail_exponent_check(estimate: LifetimeEstimate, setting: crit.Setting) -> TailCheck:
    """One-sided comparison: PASS iff ``fitted >= p Exc - ci``."""
    rep = crit.excess(setting)
    predicted = setting.p * rep.exc
    if rep.exc == 0:
        return TailCheck(estimate.fitted_exponent, predicted, estimate.ci, "PASS", "no rate at criticality")
    fitted = estimate.fitted_exponent
    if math.isnan(fitted):
        return TailCheck(fitted, predicted, estimate.ci, "FAIL", "no fitted exponent (too few crossings in window)")
    verdict = "PASS" if fitted >= float(predicted) - estimate.ci else "FAIL"
    note = "step ecdf: exponent treated as +inf" if math.isinf(fitted) else ""
    return TailCheck(fitted, predicted, estimate.ci, verdict, note)


def read_samples(path) -> List[float]:
    """Read the ``tau`` column of a samples CSV (``inf`` marks a survivor)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "tau" not in rows[0]:
        raise ExperimentError(f"{path}: expected a CSV with a 'tau' column")
    return [float(r["tau"]) for r in rows]


# --------------------------------------------------------------------------
# singular-time proxy
# --------------------------------------------------------------------------

@dataclass
class SingularTimeReport:
    epsilon: float
    threshold_K: float
    flagged: FractalSet
    dimension: Optional[DimensionFit]
    predicted_bound: Fraction
    norm_spec: str = "L2"
    set_label: str = "per-epsilon flagged set"

    def lines(self) -> List[str]:
        dim = "none" if self.dimension is None else repr(self.dimension.dimension)
        r2 = "none" if self.dimension is None else repr(self.dimension.r_squared)
        return [
            PROXY_HEADER,
            f"set = {self.set_label}",
            f"norm = {self.norm_spec}",
            f"epsilon = {self.epsilon!r}",
            f"threshold_K = {self.threshold_K!r}",
            f"flagged_components = {len(self.flagged)}",
            f"flagged_length = {self.flagged.lebesgue()!r}",
            f"measured_dimension = {dim}",
            f"fit_r_squared = {r2}",
            f"predicted_bound = {self.predicted_bound}",
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lo", "hi"])
        for lo, hi in self.flagged.intervals:
            w.writerow([repr(lo), repr(hi)])
        return buf.getvalue()


def exceedance_fraction(norms: np.ndarray, threshold_K: float) -> np.ndarray:
    return np.mean(np.asarray(norms) > threshold_K, axis=0)


def flagged_set(times: np.ndarray, fraction: np.ndarray, epsilon: float) -> FractalSet:
    """Merge runs of consecutive flagged samples into closed intervals ``[t_i, t_j]``."""
    times = np.asarray(times, dtype=float)
    flags = np.asarray(fraction) >= epsilon
    ivs = []
    i, n = 0, len(flags)
    while i < n:
        if flags[i]:
            j = i
            while j + 1 < n and flags[j + 1]:
                j += 1
            ivs.append((times[i], times[j]))
            i = j + 1
        else:
            i += 1
    return FractalSet(tuple(ivs), (float(times[0]), float(times[-1])))


def default_scales(times: np.ndarray) -> List[float]:
    """Dyadic radii from half the window down to one grid step."""
    span = float(times[-1] - times[0])
    step = float(np.min(np.diff(times)))
    out = []
    eta = span / 4.0
    while eta >= step and len(out) < 30:
        out.append(eta)
        eta /= 2.0
    return out


def singular_proxy(times: Sequence[float], norms, threshold_K: float, epsilon: float,
                   scales: Optional[Sequence[float]] = None, setting: Optional[crit.Setting] = None,
                   norm_spec: str = "L2") -> SingularTimeReport:
    """Flag times where at least a fraction ``epsilon`` of the ensemble exceeds ``K``.

    ``norms`` is an ``(ensemble, len(times))`` array on the shared time grid.
    The dimension is fitted when the flagged set is non-empty and at least 3
    scales are available; the predicted bound comes from ``setting``
    (default: 3D NSE weak setting, ``ell = 2``).
    """
    if not 0 < epsilon < 1:
        raise ExperimentError("epsilon must lie in (0, 1)")
    norms = np.asarray(norms, dtype=float)
    if norms.ndim != 2 or norms.shape[0] == 0:
        raise ExperimentError("empty ensemble")
    times = np.asarray(times, dtype=float)
    if norms.shape[1] != times.size:
        raise ExperimentError("all trajectories must share the time grid")
    flagged = flagged_set(times, exceedance_fraction(norms, threshold_K), epsilon)
    scales = list(scales) if scales is not None else default_scales(times)
    fit = None
    if not flagged.is_empty and len(scales) >= 3:
        fit = dimension_fit(flagged, scales)
    setting = setting or crit.nse_weak_setting(3).setting(2)
    bound = crit.excess(setting).dimension_bound
    return SingularTimeReport(epsilon, threshold_K, flagged, fit, bound, norm_spec)


def ensemble_norms(trajs: Sequence[Trajectory], norm_spec: str) -> Tuple[np.ndarray, np.ndarray]:
    """Stack norm channels on a common grid; samples after a blow-up are ``inf``."""
    longest = max(trajs, key=lambda tr: len(tr.times))
    times = longest.times
    out = np.full((len(trajs), len(times)), math.inf)
    for i, tr in enumerate(trajs):
        v = tr.channel(norm_spec)
        m = min(len(v), len(times))
        if not np.allclose(tr.times[:m], times[:m]):
            raise ExperimentError("trajectories do not share the time grid")
        out[i, :m] = v[:m]
    return times, out


def cantor_fixture(level: int, ensemble_size: int = 20, background: float = 0.0,
                   seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Synthetic ensemble on the grid ``i / (4 * 3^level)`` whose exceedance set is a Cantor prefix.

    Every member exceeds ``K = 1`` (norm 2) on the level-``level`` Cantor
    intervals; elsewhere a member exceeds independently with probability
    ``background``.  Norm values are 2 when exceeding and 0 otherwise.
    """
    den = 4 * 3**level
    idx = np.arange(den + 1)
    nums = [0]
    for _ in range(level):
        nums = [3 * a for a in nums] + [3 * a + 2 for a in nums]
    inside = np.zeros(den + 1, dtype=bool)
    for a in nums:
        inside[4 * a: 4 * a + 5] = True
    rng = np.random.default_rng(seed)
    extra = rng.random((ensemble_size, den + 1)) < background
    exceed = inside[None, :] | extra
    return idx / den, np.where(exceed, 2.0, 0.0)
