"""Divergence-free transport-noise families on the unit torus.

A :class:`NoiseField` is a finite list of real trigonometric fields

    sigma_n(x) = a_k * e * cos(2 pi k.x)   or   a_k * e * sin(2 pi k.x)

with ``e`` a unit polarization orthogonal to ``k``.  For Lie transport the
matrix field ``mu_n = D sigma_n`` (``mu_ij = d_j sigma_i``) is carried along.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

NONE = "none"
LIE = "lie"
COS, SIN = "cos", "sin"


class NoiseError(ValueError):
    """Invalid noise parameters or a failed invariant."""


@dataclass(frozen=True)
class NoiseMode:
    k: Tuple[int, ...]
    e: Tuple[float, ...]
    amplitude: float
    phase: str  # "cos" or "sin"


@dataclass(frozen=True)
class NoiseField:
    d: int
    modes: Tuple[NoiseMode, ...]
    gamma: float
    mu_mode: str = NONE
    M_bound: float = math.inf
    label: str = ""

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def is_zero(self) -> bool:
        return all(m.amplitude == 0.0 for m in self.modes)

    # -- grid evaluation ---------------------------------------------------
    def sigma_on_grid(self, n: int) -> np.ndarray:
        """Array of shape ``(N_fields, d, n, ..., n)``."""
        x = _grid(self.d, n)
        out = np.empty((len(self.modes), self.d) + (n,) * self.d)
        for idx, m in enumerate(self.modes):
            arg = 2 * np.pi * sum(ki * xi for ki, xi in zip(m.k, x))
            wave = np.cos(arg) if m.phase == COS else np.sin(arg)
            for i in range(self.d):
                out[idx, i] = m.amplitude * m.e[i] * wave
        return out

    def mu_on_grid(self, n: int) -> Optional[np.ndarray]:
        """Array of shape ``(N_fields, d, d, n, ..., n)`` or None if ``mu = 0``."""
        if self.mu_mode == NONE:
            return None
        x = _grid(self.d, n)
        out = np.empty((len(self.modes), self.d, self.d) + (n,) * self.d)
        for idx, m in enumerate(self.modes):
            arg = 2 * np.pi * sum(ki * xi for ki, xi in zip(m.k, x))
            # d/dx_j of cos -> -2 pi k_j sin ; of sin -> 2 pi k_j cos
            wave = -np.sin(arg) if m.phase == COS else np.cos(arg)
            for i in range(self.d):
                for j in range(self.d):
                    out[idx, i, j] = 2 * np.pi * m.amplitude * m.e[i] * m.k[j] * wave
        return out

    def l2_pointwise_sq(self) -> float:
        """``sum_n |sigma_n(x)|^2`` for a full cos/sin family (x-independent)."""
        return float(sum(m.amplitude**2 for m in self.modes)) / 2.0

    # -- serialization -----------------------------------------------------
    def to_record(self) -> dict:
        return {
            "d": self.d,
            "gamma": self.gamma,
            "mu_mode": self.mu_mode,
            "M_bound": self.M_bound,
            "label": self.label,
            "modes": [
                {"k": list(m.k), "e": list(m.e), "a": m.amplitude, "phase": m.phase} for m in self.modes
            ],
        }

    def to_text(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=1)

    @classmethod
    def from_text(cls, text: str) -> "NoiseField":
        rec = json.loads(text)
        modes = tuple(
            NoiseMode(tuple(m["k"]), tuple(m["e"]), m["a"], m["phase"]) for m in rec["modes"]
        )
        return cls(rec["d"], modes, rec["gamma"], rec["mu_mode"], rec["M_bound"], rec.get("label", ""))


def _grid(d: int, n: int) -> List[np.ndarray]:
    x1 = np.arange(n) / n
    return np.meshgrid(*([x1] * d), indexing="ij")


def _half_space_wavevectors(d: int, k_max: int) -> List[Tuple[int, ...]]:
    """Nonzero integer vectors with |k| <= k_max, one of each +/- pair."""
    out = []
    rng = range(-k_max, k_max + 1)
    for k in itertools.product(rng, repeat=d):
        if not any(k) or sum(ki * ki for ki in k) > k_max * k_max:
            continue
        # keep k whose first nonzero component is positive
        first = next(ki for ki in k if ki != 0)
        if first > 0:
            out.append(k)
    out.sort(key=lambda k: (sum(ki * ki for ki in k), k))
    return out


def _polarizations(k: Tuple[int, ...], rng: np.random.Generator) -> List[Tuple[float, ...]]:
    kv = np.asarray(k, dtype=float)
    norm = float(np.linalg.norm(kv))
    if len(k) == 2:
        return [(-kv[1] / norm, kv[0] / norm)]
    # random orthonormal pair spanning the plane orthogonal to k
    khat = kv / norm
    v = rng.standard_normal(3)
    v -= v.dot(khat) * khat
    v /= np.linalg.norm(v)
    w = np.cross(khat, v)
    return [tuple(float(c) for c in v), tuple(float(c) for c in w)]


def holder_bound(modes: Sequence[NoiseMode], gamma: float) -> float:
    """Upper bound for ``||(sigma_n)_n||_{C^gamma(T^d; l^2)}``.

    Sup part: ``sqrt(sum a^2 |e|^2)`` over cos/sin pairs.  Seminorm part from
    ``|e^{i t} - e^{i s}| <= 2^{1-g} |t - s|^g`` applied per wavevector.
    """
    g = min(gamma, 1.0)
    sup_sq = 0.0
    semi_sq = 0.0
    for m in modes:
        a2 = m.amplitude**2 * float(np.dot(m.e, m.e))
        knorm = math.sqrt(sum(ki * ki for ki in m.k))
        # cos/sin pair share a wavevector; each contributes half of |a e|^2 on average
        sup_sq += a2
        semi_sq += a2 * 4.0 ** (1.0 - g) * (2 * np.pi * knorm) ** (2 * g)
    return math.sqrt(sup_sq) + math.sqrt(semi_sq)


def build_kraichnan(d: int, k_max: int, gamma: float, amplitude: float = 1.0, seed: int = 0,
                    M_bound: Optional[float] = None) -> NoiseField:
    """Isotropic shell family with amplitudes ``amplitude * |k|^-(gamma + d/2)``."""
    if d not in (2, 3):
        raise NoiseError(f"d must be 2 or 3, got {d}")
    if k_max < 1:
        raise NoiseError(f"k_max must be >= 1, got {k_max}")
    if not gamma > 0:
        raise NoiseError(f"gamma must be positive, got {gamma}")
    if amplitude < 0:
        raise NoiseError(f"amplitude must be >= 0, got {amplitude}")
    rng = np.random.default_rng(seed)
    modes = []
    for k in _half_space_wavevectors(d, k_max):
        knorm = math.sqrt(sum(ki * ki for ki in k))
        a = amplitude * knorm ** (-(gamma + d / 2.0))
        for e in _polarizations(k, rng):
            modes.append(NoiseMode(k, e, a, COS))
            modes.append(NoiseMode(k, e, a, SIN))
    modes = tuple(modes)
    bound = holder_bound(modes, gamma) if M_bound is None else float(M_bound)
    label = "Kolmogorov-spectrum surrogate" if math.isclose(gamma, 2.0 / 3.0) else ""
    return NoiseField(d, modes, float(gamma), NONE, bound, label)


def single_mode(d: int, k: Sequence[int], e: Sequence[float], amplitude: float = 1.0,
                phase: str = COS, gamma: float = 1.0) -> NoiseField:
    """One trigonometric field; ``e`` is taken as given (test hook, no projection)."""
    mode = NoiseMode(tuple(int(c) for c in k), tuple(float(c) for c in e), float(amplitude), phase)
    return NoiseField(d, (mode,), gamma, NONE, holder_bound((mode,), gamma))


def build_lie(base: NoiseField) -> NoiseField:
    """Attach ``mu_n = D sigma_n`` (exact for trigonometric fields)."""
    if base.mu_mode != NONE:
        raise NoiseError("field already carries a Lie term")
    # the mu sup/seminorm bound is the sigma one scaled by 2 pi |k|
    lifted = [replace(m, amplitude=m.amplitude * 2 * np.pi * math.sqrt(sum(c * c for c in m.k))) for m in base.modes]
    bound = max(base.M_bound, holder_bound(lifted, base.gamma))
    return replace(base, mu_mode=LIE, M_bound=bound)


@dataclass
class NoiseReport:
    sup_l2_sq: float
    min_l2_sq: float
    holder_estimate: float
    sup_norm: float
    divergence_residual: float
    lie_residual: Optional[float]
    M_bound: float
    within_bound: bool
    notes: List[str]

    def lines(self) -> List[str]:
        out = [
            f"sup_x sum_n |sigma_n|^2 = {self.sup_l2_sq!r}",
            f"min_x sum_n |sigma_n|^2 = {self.min_l2_sq!r}",
            f"sup_norm = {self.sup_norm!r}",
            f"holder_estimate = {self.holder_estimate!r}",
            f"M_bound = {self.M_bound!r}",
            f"within_bound = {self.within_bound}",
            f"divergence_residual = {self.divergence_residual!r}",
            f"lie_residual = {self.lie_residual!r}",
        ]
        return out + [f"note: {n}" for n in self.notes]


def validate(field: NoiseField, grid_n: int = 32, strict_bound: bool = True) -> NoiseReport:
    """Grid checks of divergence, l^2 bounds, Hölder quotient and Lie consistency.

    The Hölder quotient is a finite-difference estimate at dyadic shifts, not
    a proof of membership.
    """
    if grid_n < 2 or grid_n & (grid_n - 1):
        raise NoiseError(f"grid_n must be a power of two, got {grid_n}")
    d = field.d
    kmax = max((max(abs(c) for c in m.k) for m in field.modes), default=0)
    if kmax >= grid_n // 2:
        raise NoiseError(f"grid_n={grid_n} does not resolve wavenumber {kmax}")
    sig = field.sigma_on_grid(grid_n)
    l2 = np.sum(sig**2, axis=(0, 1)) if len(field) else np.zeros((grid_n,) * d)
    sup_l2 = float(l2.max())
    min_l2 = float(l2.min())

    # spectral divergence k . sigma_hat(k), relative to the field size
    kvec = np.meshgrid(*([np.fft.fftfreq(grid_n, 1.0 / grid_n)] * d), indexing="ij")
    div_res = 0.0
    for s in sig:
        s_hat = np.fft.fftn(s, axes=tuple(range(1, d + 1))) / grid_n**d
        kdot = sum(kvec[i] * s_hat[i] for i in range(d))
        scale = max(float(np.abs(s_hat).max()) * max(kmax, 1), 1e-300)
        div_res = max(div_res, float(np.abs(kdot).max()) / scale)
    if div_res > 1e-12:
        raise NoiseError(f"divergence check failed: relative residual {div_res:.3e}")

    # finite-difference Hölder quotient at dyadic shifts along each axis
    g = min(field.gamma, 1.0)
    holder = 0.0
    shift = 1
    while shift <= grid_n // 2:
        h = shift / grid_n
        for ax in range(d):
            diff = sig - np.roll(sig, shift, axis=2 + ax)
            q = np.sqrt(np.sum(diff**2, axis=(0, 1))).max() / h**g
            holder = max(holder, float(q))
        shift *= 2
    sup_norm = math.sqrt(sup_l2)
    estimate = sup_norm + holder

    lie_res = None
    if field.mu_mode == LIE:
        mu = field.mu_on_grid(grid_n)
        lie_res = 0.0
        k2pi = [2j * np.pi * kv for kv in kvec]
        for s, m in zip(sig, mu):
            for i in range(d):
                s_hat = np.fft.fftn(s[i])
                for j in range(d):
                    grad = np.fft.ifftn(k2pi[j] * s_hat).real
                    lie_res = max(lie_res, float(np.abs(grad - m[i, j]).max()))
        mu_sup = math.sqrt(float(np.sum(mu**2, axis=(0, 1, 2)).max()))
        estimate = max(estimate, mu_sup)

    within = estimate <= field.M_bound * (1 + 1e-12)
    notes = ["Hölder norm checked by finite differences at dyadic shifts (estimator, not proof)"]
    if field.label:
        notes.append(field.label)
    if strict_bound and not within:
        raise NoiseError(f"l2/Hölder estimate {estimate:.6g} exceeds M_bound {field.M_bound:.6g}")
    return NoiseReport(sup_l2, min_l2, holder, sup_norm, div_res, lie_res, field.M_bound, within, notes)
