"""Pseudo-spectral solver for stochastic Navier-Stokes with transport noise.

Solves, on the unit torus T^d (d = 2 or 3), the Itô system

    du = [nu Lap u + A u - P div(S_eps u (x) u)] dt + sum_n L_n u dW^n,
    L_n u = P[(sigma_n . grad) u + mu_n u],    A u = 1/2 sum_n L_n^2 u,

with S_eps a Gaussian mollifier and P the Leray projection.

Fourier coefficients use the real-to-complex layout of :func:`numpy.fft.rfftn`
normalized so that ``u_hat[k]`` is the k-th Fourier coefficient on the unit
torus; Parseval then reads ``||u||_{L^2}^2 = sum_k |u_hat(k)|^2``.

Energy ledger conventions: ``E = 1/2 ||u||^2``; ``D_cum``, ``drift_cum`` and
``mart_cum`` are accumulated in the same 1/2-units, so that smooth solutions
satisfy ``E(t) + D_cum = E(0) + drift_cum + mart_cum``.  The stored
``residual`` is that balance written for ``||u||^2`` (all terms doubled).
"""
from __future__ import annotations

import csv
import io
import logging
import math
import struct
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .noise import LIE, NoiseField, build_kraichnan, build_lie

log = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"SINGTIME-STATE\0\0"
SNAPSHOT_VERSION = 1


class SolverError(RuntimeError):
    """Broken solver invariant (divergence, reality, malformed input)."""


class BlowUp(ArithmeticError):
    """Raised inside a step when the state stops being finite or bounded."""

    def __init__(self, step: int, t: float, reason: str):
        super().__init__(f"blow-up at step {step} (t={t:.6g}): {reason}")
        self.step = step
        self.t = t
        self.reason = reason


# --------------------------------------------------------------------------
# grid
# --------------------------------------------------------------------------

class Grid:
    """Wavenumbers, masks and quadrature weights for an ``n^d`` periodic grid."""

    def __init__(self, d: int, n: int):
        if d not in (2, 3):
            raise SolverError(f"d must be 2 or 3, got {d}")
        if n < 4 or n & (n - 1):
            raise SolverError(f"n must be a power of two >= 4, got {n}")
        self.d, self.n = d, n
        freqs = [np.fft.fftfreq(n, 1.0 / n)] * (d - 1) + [np.fft.rfftfreq(n, 1.0 / n)]
        k = np.meshgrid(*freqs, indexing="ij")
        self.k = np.stack(k)  # true integer wavenumbers
        self.k2 = np.sum(self.k**2, axis=0)
        kd = self.k.copy()
        kd[np.abs(kd) == n // 2] = 0.0  # Nyquist derivative set to zero
        self.kd = kd
        kd2 = np.sum(kd**2, axis=0)
        self.kd2_safe = np.where(kd2 == 0, 1.0, kd2)
        self.ik = 2j * np.pi * kd  # spectral derivative multipliers
        cutoff = n / 3.0
        self.dealias_mask = np.all(np.abs(self.k) < cutoff, axis=0)
        w = np.full(self.k2.shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        self.weights = w
        self.spectral_shape = self.k2.shape
        self.axes = tuple(range(-d, 0))
        self.shape = (n,) * d

    def to_spectral(self, u: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(u, axes=self.axes) / self.n**self.d

    def to_physical(self, u_hat: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(u_hat * self.n**self.d, s=self.shape, axes=self.axes)

    def inner(self, a_hat: np.ndarray, b_hat: np.ndarray) -> float:
        """Real L^2 inner product of two real fields given in spectral form."""
        return float(np.sum(self.weights * (a_hat * np.conj(b_hat)).real))

    def norm2(self, a_hat: np.ndarray) -> float:
        return float(np.sum(self.weights * (a_hat.real**2 + a_hat.imag**2)))

    def grid_points(self) -> List[np.ndarray]:
        x1 = np.arange(self.n) / self.n
        return np.meshgrid(*([x1] * self.d), indexing="ij")


@lru_cache(maxsize=32)
def get_grid(d: int, n: int) -> Grid:
    return Grid(d, n)


def _grid_of(f_hat: np.ndarray) -> Grid:
    d = f_hat.shape[0]
    return get_grid(d, f_hat.shape[1])


# --------------------------------------------------------------------------
# state
# --------------------------------------------------------------------------

@dataclass
class SpectralState:
    d: int
    n: int
    u_hat: np.ndarray
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return get_grid(self.d, self.n)

    def physical(self) -> np.ndarray:
        return self.grid.to_physical(self.u_hat)

    @classmethod
    def from_physical(cls, u: np.ndarray, t: float = 0.0) -> "SpectralState":
        d, n = u.shape[0], u.shape[1]
        g = get_grid(d, n)
        return cls(d, n, g.to_spectral(u), t)

    def energy(self) -> float:
        return 0.5 * self.grid.norm2(self.u_hat)

    def divergence_residual(self) -> float:
        return divergence_residual(self.u_hat)

    def copy(self) -> "SpectralState":
        return SpectralState(self.d, self.n, self.u_hat.copy(), self.t)


def divergence_residual(u_hat: np.ndarray) -> float:
    """``max_k |k . u_hat(k)| / (max|k| * ||u_hat||)`` (0 for the zero field)."""
    g = _grid_of(u_hat)
    div = np.abs(np.sum(g.kd * u_hat, axis=0)).max()
    scale = math.sqrt(g.norm2(u_hat)) * (g.n / 2)
    return 0.0 if scale == 0 else float(div / scale)


def helmholtz_project(f_hat: np.ndarray) -> np.ndarray:
    """Leray projection mode by mode; the mean mode passes through unchanged."""
    g = _grid_of(f_hat)
    kdotf = np.sum(g.kd * f_hat, axis=0)
    return f_hat - g.kd * (kdotf / g.kd2_safe)


def mollify(u_hat: np.ndarray, eps: float) -> np.ndarray:
    """Gaussian mollifier: multiply mode k by ``exp(-eps^2 4 pi^2 |k|^2)``."""
    if eps < 0:
        raise SolverError(f"mollifier eps must be >= 0, got {eps}")
    if eps == 0:
        return u_hat.copy()
    g = _grid_of(u_hat)
    return u_hat * np.exp(-(eps**2) * 4 * np.pi**2 * g.k2)


def _check_finite(arr: np.ndarray, step: int = -1, t: float = math.nan) -> None:
    if not np.all(np.isfinite(arr)):
        raise BlowUp(step, t, "non-finite value")


def gradient_physical(u_hat: np.ndarray) -> np.ndarray:
    """``grad[i, j] = d_j u_i`` on the physical grid."""
    g = _grid_of(u_hat)
    return g.to_physical(u_hat[:, None] * g.ik[None, :])


def nonlinear_term(u_hat: np.ndarray, eps: float = 0.0, dealias: bool = True,
                   step: int = -1, t: float = math.nan) -> np.ndarray:
    """``P[div(S_eps u (x) u)]`` in spectral form (conservative form)."""
    g = _grid_of(u_hat)
    # overflow is reported as a blow-up below, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        u = g.to_physical(u_hat)
        w = g.to_physical(mollify(u_hat, eps))
        # flux[i, j] = (S_eps u)_j u_i ; divergence over j
        flux = u[:, None] * w[None, :]
        flux_hat = g.to_spectral(flux)
        out = np.sum(g.ik[None, :] * flux_hat, axis=1)
        out = helmholtz_project(out)
        if dealias:
            out = out * g.dealias_mask
    _check_finite(out, step, t)
    return out


# --------------------------------------------------------------------------
# noise operators
# --------------------------------------------------------------------------

class NoiseOnGrid:
    """Noise fields sampled on a grid, reused across steps."""

    def __init__(self, field: NoiseField, n: int):
        self.field = field
        self.n = n
        self.count = len(field)
        self.sigma = field.sigma_on_grid(n)  # (N, d, grid)
        self.mu = field.mu_on_grid(n)  # (N, d, d, grid) or None
        self.has_mu = field.mu_mode == LIE

    def combined(self, weights: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        sig = np.tensordot(weights, self.sigma, axes=(0, 0))
        mu = np.tensordot(weights, self.mu, axes=(0, 0)) if self.has_mu else None
        return sig, mu


@lru_cache(maxsize=16)
def noise_on_grid(field: NoiseField, n: int) -> NoiseOnGrid:
    return NoiseOnGrid(field, n)


def _apply_transport(u_hat: np.ndarray, sigma: np.ndarray, mu: Optional[np.ndarray], dealias: bool) -> np.ndarray:
    """``P[(sigma . grad) u + mu u]`` for one (possibly combined) field."""
    g = _grid_of(u_hat)
    grad = gradient_physical(u_hat)
    phys = np.einsum("j...,ij...->i...", sigma, grad)
    if mu is not None:
        u = g.to_physical(u_hat)
        phys = phys + np.einsum("ij...,j...->i...", mu, u)
    out = helmholtz_project(g.to_spectral(phys))
    if dealias:
        out = out * g.dealias_mask
    return out


def noise_operator_L(u_hat: np.ndarray, field: NoiseField, n_index: int, dealias: bool = True) -> np.ndarray:
    """``L_n u = P[(sigma_n . grad) u + mu_n u]`` in spectral form."""
    g = _grid_of(u_hat)
    ng = noise_on_grid(field, g.n)
    mu = ng.mu[n_index] if ng.has_mu else None
    out = _apply_transport(u_hat, ng.sigma[n_index], mu, dealias)
    _check_finite(out)
    return out


def noise_operators_all(u_hat: np.ndarray, field: NoiseField, dealias: bool = True) -> np.ndarray:
    """Stack of ``L_n u`` for every field, shape ``(N, d, ...)``."""
    g = _grid_of(u_hat)
    ng = noise_on_grid(field, g.n)
    if ng.count == 0:
        return np.zeros((0,) + u_hat.shape, dtype=complex)
    grad = gradient_physical(u_hat)
    phys = np.einsum("nj...,ij...->ni...", ng.sigma, grad)
    if ng.has_mu:
        u = g.to_physical(u_hat)
        phys = phys + np.einsum("nij...,j...->ni...", ng.mu, u)
    out = helmholtz_project_batch(g.to_spectral(phys), g)
    if dealias:
        out = out * g.dealias_mask
    return out


def helmholtz_project_batch(f_hat: np.ndarray, g: Grid) -> np.ndarray:
    """Leray projection of a stack of fields with the component axis at ``-d-1``."""
    kdotf = np.sum(g.kd * f_hat, axis=-g.d - 1, keepdims=True)
    return f_hat - g.kd * (kdotf / g.kd2_safe)


def ito_correction(u_hat: np.ndarray, field: NoiseField, dealias: bool = True) -> np.ndarray:
    """``A u = 1/2 sum_n L_n(L_n u)``."""
    g = _grid_of(u_hat)
    ng = noise_on_grid(field, g.n)
    out = np.zeros_like(u_hat)
    if ng.count == 0:
        return out
    Lu = noise_operators_all(u_hat, field, dealias)
    for idx in range(ng.count):
        mu = ng.mu[idx] if ng.has_mu else None
        out += _apply_transport(Lu[idx], ng.sigma[idx], mu, dealias)
    out *= 0.5
    _check_finite(out)
    return out


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class SimConfig:
    d: int = 2
    n: int = 32
    nu: float = 1.0
    dt: float = 1e-3
    t_end: float = 1.0
    mollifier_eps: float = 0.0
    dealias: bool = True
    nonlinear: bool = True
    scheme: str = "euler"  # "euler" or "milstein"
    seed: int = 0
    realization: int = 0
    record_every: int = 1
    norm_space: str = "L2"  # L2 | Lq | Hs
    norm_q: float = 2.0
    norm_s: float = 1.0
    blowup_factor: float = 1e6
    u0_kind: str = "taylor_green"  # taylor_green | random_shell | file
    u0_amplitude: float = 1.0
    u0_k0: float = 2.0
    u0_path: str = ""
    noise_kind: str = "none"  # none | kraichnan
    noise_k_max: int = 2
    noise_gamma: float = 1.0
    noise_amplitude: float = 0.1
    noise_lie: bool = False
    noise_seed: int = 0
    noise: Optional[NoiseField] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise SolverError(f"dt must be > 0, got {self.dt}")
        if self.mollifier_eps < 0:
            raise SolverError(f"mollifier_eps must be >= 0, got {self.mollifier_eps}")
        if self.scheme not in ("euler", "milstein"):
            raise SolverError(f"unknown scheme {self.scheme!r}")
        if self.norm_space not in ("L2", "Lq", "Hs"):
            raise SolverError(f"unknown norm space {self.norm_space!r}")
        if self.record_every < 1:
            raise SolverError("record_every must be >= 1")
        get_grid(self.d, self.n)  # validates d, n

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def noise_field(self) -> Optional[NoiseField]:
        if self.noise is not None:
            return self.noise
        if self.noise_kind == "none":
            return None
        if self.noise_kind != "kraichnan":
            raise SolverError(f"unknown noise kind {self.noise_kind!r}")
        f = build_kraichnan(self.d, self.noise_k_max, self.noise_gamma, self.noise_amplitude, self.noise_seed)
        return build_lie(f) if self.noise_lie else f

    def resolved(self) -> Dict[str, object]:
        """Flat dict of scalar settings (for provenance headers)."""
        out = {}
        for f in fields(self):
            if f.name == "noise":
                continue
            out[f.name] = getattr(self, f.name)
        return out


_KEY_ALIASES = {
    "norm.space": "norm_space",
    "norm.q": "norm_q",
    "norm.s": "norm_s",
    "u0.kind": "u0_kind",
    "u0.amplitude": "u0_amplitude",
    "u0.k0": "u0_k0",
    "u0.path": "u0_path",
    "noise.kind": "noise_kind",
    "noise.k_max": "noise_k_max",
    "noise.gamma": "noise_gamma",
    "noise.amplitude": "noise_amplitude",
    "noise.lie": "noise_lie",
    "noise.seed": "noise_seed",
}


def _coerce(name: str, value, typ):
    if typ in (bool, "bool"):
        if isinstance(value, bool):
            return value
        v = str(value).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise SolverError(f"{name}: expected a boolean, got {value!r}")
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    return str(value)


def config_from_mapping(values: Dict[str, object], base: Optional[SimConfig] = None) -> SimConfig:
    """Build a config from flat ``key -> value`` pairs (dotted keys accepted)."""
    base = base or SimConfig()
    types = {f.name: f.type for f in fields(SimConfig) if f.name != "noise"}
    updates = {}
    for key, value in values.items():
        name = _KEY_ALIASES.get(key, key.replace(".", "_"))
        if name not in types:
            raise SolverError(f"unknown config key {key!r}")
        updates[name] = _coerce(key, value, types[name])
    return replace(base, **updates)


def load_config(path) -> SimConfig:
    """Read a flat ``key = value`` config file (``#`` comments, no sections)."""
    import configparser

    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    with open(path) as fh:
        parser.read_string("[config]\n" + fh.read())
    return config_from_mapping(dict(parser["config"]))


def dump_config(cfg: SimConfig) -> str:
    lines = []
    inverse = {v: k for k, v in _KEY_ALIASES.items()}
    for key, value in cfg.resolved().items():
        lines.append(f"{inverse.get(key, key)} = {value}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# initial data
# --------------------------------------------------------------------------

def taylor_green(d: int, n: int, amplitude: float = 1.0) -> SpectralState:
    g = get_grid(d, n)
    x = g.grid_points()
    tp = 2 * np.pi
    if d == 2:
        u = np.stack([-np.cos(tp * x[0]) * np.sin(tp * x[1]), np.sin(tp * x[0]) * np.cos(tp * x[1])])
    else:
        u = np.stack([
            np.sin(tp * x[0]) * np.cos(tp * x[1]) * np.cos(tp * x[2]),
            -np.cos(tp * x[0]) * np.sin(tp * x[1]) * np.cos(tp * x[2]),
            np.zeros_like(x[0]),
        ])
    return SpectralState.from_physical(amplitude * u)


def random_shell(d: int, n: int, rng: np.random.Generator, k0: float = 2.0, energy: float = 0.5,
                 dealias: bool = True) -> SpectralState:
    """Random divergence-free field with spectrum ``~ |k|^4 exp(-2 (|k|/k0)^2)``."""
    g = get_grid(d, n)
    noise = rng.standard_normal((d,) + g.shape)
    u_hat = g.to_spectral(noise)
    kk = np.sqrt(g.k2)
    amp = np.where(kk > 0, kk**2 * np.exp(-((kk / k0) ** 2)) / np.maximum(kk, 1.0) ** ((d - 1) / 2.0), 0.0)
    u_hat = helmholtz_project(u_hat * amp)
    if dealias:
        u_hat = u_hat * g.dealias_mask
    # round trip removes any non-Hermitian part left by masking
    u_hat = g.to_spectral(g.to_physical(u_hat))
    e = 0.5 * g.norm2(u_hat)
    if e > 0:
        u_hat *= math.sqrt(energy / e)
    return SpectralState(d, n, u_hat, 0.0)


def random_divergence_free(d: int, n: int, rng: np.random.Generator, dealias: bool = True) -> SpectralState:
    """Random divergence-free state with all retained modes excited (test helper)."""
    g = get_grid(d, n)
    u_hat = g.to_spectral(rng.standard_normal((d,) + g.shape))
    decay = 1.0 / (1.0 + g.k2)
    u_hat = helmholtz_project(u_hat * decay)
    if dealias:
        u_hat = u_hat * g.dealias_mask
    u_hat = g.to_spectral(g.to_physical(u_hat))
    return SpectralState(d, n, u_hat, 0.0)


def write_snapshot(state: SpectralState, path) -> None:
    """Binary snapshot: magic, version byte, d and n (uint32 LE), complex128 LE coefficients."""
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<BII", SNAPSHOT_VERSION, state.d, state.n))
        fh.write(np.ascontiguousarray(state.u_hat, dtype="<c16").tobytes())


def read_snapshot(path) -> SpectralState:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:16] != SNAPSHOT_MAGIC:
        raise SolverError(f"{path}: bad snapshot magic")
    version, d, n = struct.unpack_from("<BII", data, 16)
    if version != SNAPSHOT_VERSION:
        raise SolverError(f"{path}: unsupported snapshot version {version}")
    g = get_grid(d, n)
    shape = (d,) + g.spectral_shape
    coeffs = np.frombuffer(data, dtype="<c16", offset=16 + 9)
    if coeffs.size != int(np.prod(shape)):
        raise SolverError(f"{path}: truncated snapshot")
    return SpectralState(d, n, coeffs.reshape(shape).astype(complex), 0.0)


def seed_sequence(seed: int, realization: int, stream: int) -> np.random.SeedSequence:
    """Sub-seeds: stream 0 = Brownian increments, stream 1 = initial data."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(realization, stream))


def initial_state(cfg: SimConfig) -> SpectralState:
    g = get_grid(cfg.d, cfg.n)
    if cfg.u0_kind == "taylor_green":
        st = taylor_green(cfg.d, cfg.n, cfg.u0_amplitude)
    elif cfg.u0_kind == "random_shell":
        rng = np.random.default_rng(seed_sequence(cfg.seed, cfg.realization, 1))
        st = random_shell(cfg.d, cfg.n, rng, cfg.u0_k0, 0.5 * cfg.u0_amplitude**2, cfg.dealias)
    elif cfg.u0_kind == "file":
        st = read_snapshot(cfg.u0_path)
        if (st.d, st.n) != (cfg.d, cfg.n):
            raise SolverError("snapshot grid does not match config")
    else:
        raise SolverError(f"unknown u0 kind {cfg.u0_kind!r}")
    if cfg.dealias:
        st.u_hat = st.u_hat * g.dealias_mask
    return st


# --------------------------------------------------------------------------
# norms and ledger
# --------------------------------------------------------------------------

def state_norm(u_hat: np.ndarray, space: str = "L2", q: float = 2.0, s: float = 1.0) -> float:
    g = _grid_of(u_hat)
    if space == "L2":
        return math.sqrt(g.norm2(u_hat))
    if space == "Hs":
        return math.sqrt(float(np.sum(g.weights * (1 + 4 * np.pi**2 * g.k2) ** s * np.abs(u_hat) ** 2)))
    if space == "Lq":
        u = g.to_physical(u_hat)
        mag = np.sqrt(np.sum(u**2, axis=0))
        return float(np.mean(mag**q) ** (1.0 / q))
    raise SolverError(f"unknown norm space {space!r}")


def h1_norm2(u_hat: np.ndarray) -> float:
    g = _grid_of(u_hat)
    return float(np.sum(g.weights * (1 + 4 * np.pi**2 * g.k2) * np.abs(u_hat) ** 2))


LEDGER_COLUMNS = ("step", "t", "E", "D_cum", "drift_cum", "mart_cum", "residual", "norm")


@dataclass
class EnergyLedger:
    E0: float
    rows: List[Tuple[int, float, float, float, float, float, float, float]] = field(default_factory=list)

    def append(self, step, t, E, D, drift, mart, norm):
        residual = 2.0 * (E - self.E0) + 2.0 * D - 2.0 * drift - 2.0 * mart
        self.rows.append((step, t, E, D, drift, mart, residual, norm))

    def column(self, name: str) -> np.ndarray:
        i = LEDGER_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    @property
    def final_residual(self) -> float:
        return self.rows[-1][6]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS[1:])
        for r in self.rows:
            w.writerow([repr(float(v)) for v in r[1:]])
        return buf.getvalue()


@dataclass
class StepWork:
    dissipation: float
    drift_work: float
    martingale: float


def _ledger_terms(u_hat: np.ndarray, Lu: Optional[np.ndarray], ng: Optional[NoiseOnGrid], dW: np.ndarray,
                  dt: float) -> Tuple[float, float]:
    """Drift work ``dt sum_n <L_n u, S_n u>`` and martingale ``sum_n dW_n <mu_n u, u>``."""
    if ng is None or not ng.has_mu:
        return 0.0, 0.0
    g = _grid_of(u_hat)
    u = g.to_physical(u_hat)
    drift = 0.0
    mart = 0.0
    for idx in range(ng.count):
        mu = ng.mu[idx]
        mu_u = np.einsum("ij...,j...->i...", mu, u)
        sym_u = 0.5 * (mu_u + np.einsum("ji...,j...->i...", mu, u))
        Lphys = g.to_physical(Lu[idx])
        drift += float(np.mean(np.sum(Lphys * sym_u, axis=0)))
        mart += float(dW[idx]) * float(np.mean(np.sum(mu_u * u, axis=0)))
    return dt * drift, mart


# --------------------------------------------------------------------------
# time stepping
# --------------------------------------------------------------------------

def step(state: SpectralState, cfg: SimConfig, dW: Optional[np.ndarray] = None,
         step_index: int = -1) -> Tuple[SpectralState, StepWork]:
    """One exponential-integrator step.

    The heat semigroup is applied exactly per mode; the convective term, the
    Itô correction and the noise increment are explicit.  With
    ``scheme="milstein"`` the second-order term ``1/2 X(X u)`` with
    ``X = sum_n dW_n L_n`` is added; its mean is ``A u dt``, so the Itô
    correction is carried by it instead of being added separately.
    """
    g = state.grid
    u_hat = state.u_hat
    dt = cfg.dt
    field_ = cfg.noise_field()
    ng = noise_on_grid(field_, g.n) if field_ is not None and len(field_) else None
    if ng is not None and (dW is None or len(dW) != ng.count):
        raise SolverError(f"expected {ng.count} Brownian increments")

    incr = np.zeros_like(u_hat)
    if cfg.nonlinear:
        incr -= dt * nonlinear_term(u_hat, cfg.mollifier_eps, cfg.dealias, step_index, state.t)

    drift_work = mart = 0.0
    if ng is not None:
        Lu = noise_operators_all(u_hat, field_, cfg.dealias) if (cfg.scheme == "euler" or ng.has_mu) else None
        if cfg.scheme == "euler":
            incr += np.tensordot(dW, Lu, axes=(0, 0))
            incr += dt * ito_correction(u_hat, field_, cfg.dealias)
        else:
            sig, mu = ng.combined(dW)
            Xu = _apply_transport(u_hat, sig, mu, cfg.dealias)
            XXu = _apply_transport(Xu, sig, mu, cfg.dealias)
            incr += Xu + 0.5 * XXu
        drift_work, mart = _ledger_terms(u_hat, Lu, ng, dW, dt)

    v_hat = u_hat + incr
    _check_finite(v_hat, step_index, state.t)
    decay = np.exp(-cfg.nu * 4 * np.pi**2 * g.k2 * dt)
    new_hat = decay * v_hat
    # exact dissipation of the heat flow started from v over one step
    dissipation = 0.5 * float(np.sum(g.weights * (1.0 - decay**2) * np.abs(v_hat) ** 2))
    new_hat = helmholtz_project(new_hat)
    return SpectralState(state.d, state.n, new_hat, state.t + dt), StepWork(dissipation, drift_work, mart)


def brownian_increments(seed: int, realization: int, n_steps: int, n_fields: int, dt: float) -> np.ndarray:
    rng = np.random.default_rng(seed_sequence(seed, realization, 0))
    return math.sqrt(dt) * rng.standard_normal((n_steps, n_fields))


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments (same Brownian path, coarser dt)."""
    n_steps = increments.shape[0]
    if n_steps % factor:
        raise SolverError("number of steps not divisible by the coarsening factor")
    return increments.reshape(n_steps // factor, factor, -1).sum(axis=1)


@dataclass
class SimResult:
    config: SimConfig
    ledger: EnergyLedger
    final_state: SpectralState
    blowup: Optional[BlowUp] = None
    max_divergence: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.ledger.column("t")

    @property
    def norms(self) -> np.ndarray:
        return self.ledger.column("norm")

    def to_csv(self) -> str:
        return self.ledger.to_csv()


def simulate(cfg: SimConfig, u0: Optional[SpectralState] = None,
             increments: Optional[np.ndarray] = None, check_divergence: bool = True) -> SimResult:
    """Run to ``t_end`` (or blow-up) recording the energy ledger and norm channel.

    Blow-up is returned in ``SimResult.blowup``, never raised.
    """
    state = (u0.copy() if u0 is not None else initial_state(cfg))
    field_ = cfg.noise_field()
    n_fields = len(field_) if field_ is not None else 0
    n_steps = cfg.n_steps
    if increments is None and n_fields:
        increments = brownian_increments(cfg.seed, cfg.realization, n_steps, n_fields, cfg.dt)
    if increments is not None and n_fields and increments.shape != (n_steps, n_fields):
        raise SolverError(f"increments shape {increments.shape} != {(n_steps, n_fields)}")

    def norm_of(st):
        return state_norm(st.u_hat, cfg.norm_space, cfg.norm_q, cfg.norm_s)

    E0 = state.energy()
    ledger = EnergyLedger(E0)
    norm0 = norm_of(state)
    ledger.append(0, state.t, E0, 0.0, 0.0, 0.0, norm0)
    ceiling = cfg.blowup_factor * max(math.sqrt(2 * E0), 1e-300)
    D = drift = mart = 0.0
    max_div = 0.0
    blow = None
    for k in range(n_steps):
        dW = increments[k] if n_fields else None
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                state, work = step(state, cfg, dW, k)
                E = state.energy()
            if not math.isfinite(E):
                raise BlowUp(k, state.t, "non-finite energy")
            if math.sqrt(2 * E) > ceiling:
                raise BlowUp(k, state.t, f"L2 norm exceeded {cfg.blowup_factor:g} x initial")
        except BlowUp as exc:
            blow = exc
            log.info("%s", exc)
            break
        D += work.dissipation
        drift += work.drift_work
        mart += work.martingale
        if check_divergence:
            div = divergence_residual(state.u_hat)
            max_div = max(max_div, div)
            if div > 1e-10:
                raise SolverError(f"divergence residual {div:.3e} at step {k}")
        if (k + 1) % cfg.record_every == 0 or k == n_steps - 1:
            ledger.append(k + 1, state.t, E, D, drift, mart, norm_of(state))
    return SimResult(cfg, ledger, state, blow, max_div)
