"""Criticality calculus for semilinear SPDEs in exact rational arithmetic.

Everything here works on :class:`fractions.Fraction`; floats are accepted as
input only through :func:`as_rational`, which converts them via their shortest
decimal representation (``0.75 -> 3/4``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence, Tuple, Union

Number = Union[int, float, str, Fraction]

COUPLED = "coupled"
ADDITIVE = "additive"

GLOBAL_IRREGULARITY = "global_irregularity"
PARTIAL_REGULARITY = "partial_regularity"
GLOBAL_REGULARITY = "global_regularity"
SPATIALLY_CRITICAL = "spatially_critical"


class CriticalityError(ValueError):
    """A parameter violates one of the admissibility inequalities."""


def as_rational(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise CriticalityError(f"non-finite value {x}")
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class NonlinearityTerm:
    """Growth exponent ``rho`` and roughness ``beta`` of one nonlinear term."""

    rho: Fraction
    beta: Fraction

    def __post_init__(self):
        rho, beta = as_rational(self.rho), as_rational(self.beta)
        if not rho > 0:
            raise CriticalityError(f"rho > 0 violated: rho = {rho}")
        if not 0 < beta < 1:
            raise CriticalityError(f"0 < beta < 1 violated: beta = {beta}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "beta", beta)


def _check_p_alpha(p: Fraction, alpha: Fraction) -> None:
    if p < 2:
        raise CriticalityError(f"p >= 2 violated: p = {p}")
    if alpha < 0:
        raise CriticalityError(f"alpha >= 0 violated: alpha = {alpha}")
    if alpha != 0 and not alpha < p / 2 - 1:
        raise CriticalityError(f"alpha < p/2 - 1 violated: alpha = {alpha}, p/2 - 1 = {p / 2 - 1}")


def _check_roughness(term: NonlinearityTerm, p: Fraction, alpha: Fraction) -> None:
    lower = 1 - (1 + alpha) / p
    if not term.beta > lower:
        raise CriticalityError(
            f"1 - (1+alpha)/p < beta violated: beta = {term.beta}, 1 - (1+alpha)/p = {lower}"
        )


@dataclass(frozen=True)
class Setting:
    """Parameters ``(p, alpha, ell, terms)`` of a criticality computation.

    ``strict`` additionally enforces the roughness window
    ``beta_j > 1 - (1+alpha)/p``.  It is off by default: settings derived from
    sharp Sobolev embeddings routinely sit on or below that edge.
    """

    p: Fraction
    alpha: Fraction
    terms: Tuple[NonlinearityTerm, ...]
    ell: Fraction = Fraction(2)
    split_mode: str = COUPLED
    strict: bool = False

    def __post_init__(self):
        p, alpha, ell = as_rational(self.p), as_rational(self.alpha), as_rational(self.ell)
        _check_p_alpha(p, alpha)
        if ell < 1:
            raise CriticalityError(f"ell >= 1 violated: ell = {ell}")
        terms = tuple(
            t if isinstance(t, NonlinearityTerm) else NonlinearityTerm(*t) for t in self.terms
        )
        if not terms:
            raise CriticalityError("at least one nonlinearity term is required")
        if self.split_mode not in (COUPLED, ADDITIVE):
            raise CriticalityError(f"unknown split_mode {self.split_mode!r}")
        if self.strict:
            for t in terms:
                _check_roughness(t, p, alpha)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "terms", terms)


@dataclass
class CriticalityReport:
    exc_terms: List[Fraction]
    exc: Fraction
    subcritical: List[bool]
    spatially_subcritical: bool
    spacetime_supercritical: bool
    dimension_bound: Fraction
    regime: str
    ell: Fraction = Fraction(2)
    mode: str = COUPLED
    notes: List[str] = field(default_factory=list)

    def lines(self) -> List[str]:
        return [
            f"mode = {self.mode}",
            "exc_terms = " + ", ".join(str(e) for e in self.exc_terms),
            f"Exc = {self.exc}",
            f"ell = {self.ell}",
            f"spatially_subcritical = {self.spatially_subcritical}",
            f"spacetime_supercritical = {self.spacetime_supercritical}",
            f"dimension_bound = {self.dimension_bound}",
            f"regime = {self.regime}",
        ]

    def to_record(self) -> dict:
        return {
            "mode": self.mode,
            "exc_terms": [str(e) for e in self.exc_terms],
            "exc": str(self.exc),
            "ell": str(self.ell),
            "subcritical": self.subcritical,
            "spatially_subcritical": self.spatially_subcritical,
            "spacetime_supercritical": self.spacetime_supercritical,
            "dimension_bound": str(self.dimension_bound),
            "regime": self.regime,
        }


def excess_per_term(term: NonlinearityTerm, p: Number, alpha: Number, strict: bool = False) -> Fraction:
    """``1 - beta - rho/(rho+1) * (1+alpha)/p`` for a single term."""
    p, alpha = as_rational(p), as_rational(alpha)
    _check_p_alpha(p, alpha)
    if strict:
        _check_roughness(term, p, alpha)
    return 1 - term.beta - term.rho / (term.rho + 1) * (1 + alpha) / p


def additive_excess_per_term(term: NonlinearityTerm, p: Number, alpha: Number) -> Fraction:
    """Per-term excess for a sum of nonlinearities: ``(rho+1)/rho (1-beta) - (1+alpha)/p``."""
    p, alpha = as_rational(p), as_rational(alpha)
    return (term.rho + 1) / term.rho * (1 - term.beta) - (1 + alpha) / p


def classify(exc: Fraction, ell: Fraction) -> str:
    if exc == 0:
        return SPATIALLY_CRITICAL
    if exc < 0:
        return GLOBAL_IRREGULARITY
    if exc < 1 / ell:
        return PARTIAL_REGULARITY
    return GLOBAL_REGULARITY


def excess(setting: Setting) -> CriticalityReport:
    """Excess from criticality of a setting and the singular-time dimension bound."""
    p, alpha = setting.p, setting.alpha
    per_term = [excess_per_term(t, p, alpha, strict=setting.strict) for t in setting.terms]
    if setting.split_mode == COUPLED:
        rho_max = max(t.rho for t in setting.terms)
        exc = min(per_term) * (1 + 1 / rho_max)
    else:
        exc = min(additive_excess_per_term(t, p, alpha) for t in setting.terms)
    ell = setting.ell
    regime = classify(exc, ell)
    notes = []
    if regime == SPATIALLY_CRITICAL:
        notes.append("critical energy space: singular times are Lebesgue-null, no dimension rate")
    return CriticalityReport(
        exc_terms=per_term,
        exc=exc,
        subcritical=[e >= 0 for e in per_term],
        spatially_subcritical=exc > 0,
        spacetime_supercritical=exc < 1 / ell,
        dimension_bound=1 - ell * exc,
        regime=regime,
        ell=ell,
        mode=setting.split_mode,
        notes=notes,
    )


@dataclass(frozen=True)
class SerrinResult:
    delta0: Fraction
    regime: str
    serrin_sum: Fraction


def serrin_delta(p0: Number, q0: Number, gamma0: Number = 0) -> SerrinResult:
    """Dimension bound ``p0/2 * (2/p0 + gamma0 + 3/q0 - 1)`` under a Serrin-type bound.

    When ``2/p0 + gamma0 + 3/q0 <= 1`` the Serrin criterion applies and the
    regime is flagged as global regularity.
    """
    p0, q0, gamma0 = as_rational(p0), as_rational(q0), as_rational(gamma0)
    if p0 < 2:
        raise CriticalityError(f"p0 >= 2 violated: p0 = {p0}")
    if not q0 > 3:
        raise CriticalityError(f"q0 > 3 violated: q0 = {q0}")
    if gamma0 < 0:
        raise CriticalityError(f"gamma0 >= 0 violated: gamma0 = {gamma0}")
    if not gamma0 < 3 / q0:
        raise CriticalityError(f"gamma0 < 3/q0 violated: gamma0 = {gamma0}, 3/q0 = {3 / q0}")
    if not gamma0 + 3 / q0 < 1:
        raise CriticalityError(f"gamma0 + 3/q0 < 1 violated: gamma0 + 3/q0 = {gamma0 + 3 / q0}")
    total = 2 / p0 + gamma0 + 3 / q0
    delta0 = p0 / 2 * (total - 1)
    regime = PARTIAL_REGULARITY if total > 1 else GLOBAL_REGULARITY
    return SerrinResult(delta0=delta0, regime=regime, serrin_sum=total)


@dataclass(frozen=True)
class WeakSetting:
    p: Fraction
    alpha: Fraction
    beta: Fraction
    trace_index: Fraction
    q: Fraction

    def setting(self, ell: Number = 2) -> Setting:
        return Setting(self.p, self.alpha, (NonlinearityTerm(1, self.beta),), ell, COUPLED)


def nse_weak_setting(q: Number) -> WeakSetting:
    """Weak L^q-setting for 3D NSEs with ``H^1`` embedded sharply in the trace space.

    The weight ratio is fixed by ``(1+alpha)/p = 3/2 (1/2 - 1/q)``; ``p`` is the
    smallest integer >= 4 for which ``alpha >= 0``.
    """
    q = as_rational(q)
    if not 2 < q < 6:
        raise CriticalityError(
            f"2 < q < 6 violated: q = {q} (sharp embedding H^1 -> trace space needs alpha < p/2 - 1)"
        )
    ratio = Fraction(3, 2) * (Fraction(1, 2) - 1 / q)
    p = Fraction(max(4, math.ceil(1 / ratio)))
    alpha = ratio * p - 1
    _check_p_alpha(p, alpha)
    beta = Fraction(1, 2) + Fraction(3, 4) / q
    trace_index = 1 - 2 * (1 + alpha) / p - 3 / q
    return WeakSetting(p=p, alpha=alpha, beta=beta, trace_index=trace_index, q=q)


def holder_gap_exponent(term: NonlinearityTerm, p: Number, alpha: Number) -> Fraction:
    """Exponent of ``T`` in the Hölder step ``L^{p/theta} -> L^{p(rho+1)}`` on ``(0, T)``.

    Only the weight ``t^alpha`` enters here, so ``alpha`` is not tied to
    ``p/2 - 1``.
    """
    p, alpha = as_rational(p), as_rational(alpha)
    if p < 2:
        raise CriticalityError(f"p >= 2 violated: p = {p}")
    if alpha < 0:
        raise CriticalityError(f"alpha >= 0 violated: alpha = {alpha}")
    ceiling = 1 - term.rho / (term.rho + 1) * (1 + alpha) / p
    if not term.beta <= ceiling:
        raise CriticalityError(
            f"beta <= 1 - rho/(rho+1) (1+alpha)/p violated: beta = {term.beta}, bound = {ceiling}"
        )
    # Hölder: 1/r + theta/p = 1/(p(rho+1)), with theta fixed by the weight scaling
    theta = 1 - p * (1 - term.beta) / (1 + alpha)
    inv_r = 1 / (p * (term.rho + 1)) - theta / p
    return (1 + alpha) * inv_r


def lifetime_tail_bound(exc: Number, p: Number, N: float, T: float, C0: float = 1.0) -> float:
    """``C0 * T**(p*exc) * (1 + N**p)``."""
    exc, p = as_rational(exc), as_rational(p)
    if exc < 0:
        raise CriticalityError(f"exc >= 0 violated: exc = {exc}")
    if N < 0:
        raise CriticalityError(f"N >= 0 violated: N = {N}")
    if not T > 0:
        raise CriticalityError(f"T > 0 violated: T = {T}")
    if not C0 > 0:
        raise CriticalityError(f"C0 > 0 violated: C0 = {C0}")
    rate = p * exc
    return float(C0) * float(T) ** float(rate) * (1.0 + float(N) ** float(p))


def nse_table() -> List[str]:
    """The two rows deriving the 3D NSE singular-time bounds, as fixed text."""
    ws = nse_weak_setting(3)
    rep = excess(ws.setting(2))
    regularity = Fraction(1) - Fraction(3, 2)
    exc_row1 = Fraction(1, 2) * (regularity + 1)
    assert exc_row1 == rep.exc
    rows = [
        "row | energy space | ell | spatial regularity | Exc | singular time dim bound",
        f"1 | L^2_t(H^1(T^3)) | 2 | 1-3/2 = {regularity} | (1/2)(-1/2+1) = {rep.exc} | {rep.dimension_bound}",
    ]
    a = serrin_delta(4, 4)
    b = serrin_delta(4, 6)
    rows.append(
        "2 | L^p0_t(L^q0(T^3)) | p0 | -3/q0 | (1/2)(-3/q0+1) | (p0/2)(2/p0+3/q0-1): "
        f"(p0,q0)=(4,4) -> {a.delta0}; (p0,q0)=(4,6) -> {b.delta0} [{b.regime}]"
    )
    return rows
