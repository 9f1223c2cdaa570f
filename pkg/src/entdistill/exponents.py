"""Finite-copy brackets on distillation exponents and one-shot cost relations."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import matcore as mc
from .bracket import Bracket
from .divergence import d_max, d_omega
from .errors import ConversionUnknown, InvalidOperator, PreconditionViolation, SizeGuard
from .instruments import DilSubchannel, MembershipVerdict, dne_check_dil, ne_check_dil, ne_to_dne
from .postselect import MeasurementClass, beta_hat_analytic, d_omega_measured
from .sdp import Model, solve
from .sepset import (
    PPTOperator,
    SeparableDecomposition,
    SepSearchOptions,
    d_omega_sep,
    werner_decomposition,
    werner_family,
)

MAX_TOTAL_DIM = 36
MAX_COPIES = 2


def error_threshold(m: int, delta: float) -> float:
    """Conditional error level ``2^delta / (2^delta + m - 1)`` tied to an ``m``-dimensional target."""
    if m < 2:
        raise ValueError("m must be at least 2")
    t = 2.0**delta
    return t / (t + m - 1)


def achievability_threshold(m: int, delta: float) -> float:
    return min(2.0 / m + m / (m + 1) * min(2.0**delta - 1, 2.0), 1.0)


def sandwich(eps: float, lower_bits: float, upper_bits: float, n: int = 1) -> Bracket:
    """Per-copy bracket ``[log(eps/(1-eps)) + L, log(1/(1-eps)) + U] / n``.

    Valid for the conditional error exponent whenever ``[L, U]`` brackets
    the separable distance of the ``n``-copy state, since ``Omega >= 1``.
    """
    if not 0 < eps < 1:
        lo = -np.inf if eps <= 0 else np.inf
        return Bracket(lo / n if np.isfinite(lo) else lo, np.inf, "degenerate threshold", None)
    lo = np.log2(eps / (1 - eps)) + lower_bits
    hi = np.log2(1 / (1 - eps)) + upper_bits
    return Bracket(float(lo / n), float(hi / n), "sandwich lower", "sandwich upper")


@dataclass
class ExponentReport:
    n: int
    m: int
    delta: float
    epsilon: float
    bracket: Bracket
    distance: Bracket
    beta: Bracket
    sources: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def br(b):
            return {"lower": b.lower, "upper": b.upper}

        return {
            "n": self.n,
            "m": self.m,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "bracket": br(self.bracket),
            "distance": br(self.distance),
            "beta": br(self.beta),
            "sources": {k: str(v) for k, v in self.sources.items()},
            "extra": {k: (br(v) if isinstance(v, Bracket) else v) for k, v in self.extra.items()},
        }


def _powers(rho, n, dims):
    if n < 1 or n > MAX_COPIES:
        raise SizeGuard(f"n must be 1 or 2, got {n}")
    total = rho.shape[0] ** n
    if total > MAX_TOTAL_DIM:
        raise SizeGuard(f"{n} copies give dimension {total} > {MAX_TOTAL_DIM}")
    if n == 1:
        return rho, dims
    return mc.tensor_power(rho, n, dims)


def _source(cert) -> str:
    if isinstance(cert, tuple) and cert:
        return str(cert[0])
    if isinstance(cert, SeparableDecomposition):
        return f"separable decomposition ({cert.label})"
    if isinstance(cert, PPTOperator):
        return f"PPT operator ({cert.label})"
    return str(cert)


def _werner_candidates(rho, dims, n):
    """Tensor powers of the exact Werner decomposition, for states on the qubit Werner line."""
    if dims != (2, 2):
        return []
    wp = werner_family(rho, dims)
    if not np.allclose(mc.werner_state(wp.p, 2), rho, atol=1e-10):
        return []
    q = max(wp.p, 0.5)
    return [werner_decomposition(q).power(n)]


def separable_distance(rho, n: int = 1, dims=None, options: SepSearchOptions | None = None,
                       rng=None) -> tuple[Bracket, np.ndarray, tuple]:
    """Bracket on the separable distance of ``rho`` to the ``n``-th tensor power.

    For ``n = 2`` the square of the best one-copy decomposition is offered as
    a candidate, so the two-copy upper end never exceeds twice the one-copy one.
    """
    r = mc.hermitize(mc.check_state(rho, substate=False))
    dims = mc.resolve_dims(r, dims)
    rn, dn = _powers(r, n, dims)
    extra = _werner_candidates(r, dims, n)
    if n > 1:
        one = d_omega_sep(r, dims, extra_candidates=_werner_candidates(r, dims, 1), options=options, rng=rng)
        if isinstance(one.upper_certificate, (SeparableDecomposition, PPTOperator)):
            extra.append(one.upper_certificate.power(n))
        opts = options or SepSearchOptions(column_rounds=8)
    else:
        opts = options
    br = d_omega_sep(rn, dn, extra_candidates=extra, options=opts, rng=rng)
    return br, rn, dn


def distill_exponent_bracket(rho, n: int = 1, m: int = 2, delta: float = 0.0, dims=None,
                             epsilon_model: float | None = None, rng=None) -> ExponentReport:
    """Per-copy bracket on the postselected separable testing exponent at ``n`` copies.

    ``epsilon_model`` overrides the error level; by default it is
    ``2^delta / (2^delta + m - 1)``. ``report.bracket`` is the two-sided
    sandwich; ``report.beta`` is the tighter bracket from the exact formula
    evaluated at the ends of the distance bracket.
    """
    eps = error_threshold(m, delta) if epsilon_model is None else float(epsilon_model)
    dist, _, _ = separable_distance(rho, n, dims, rng=rng)
    beta = Bracket(
        beta_hat_analytic(eps, 2.0**dist.lower) / n,
        beta_hat_analytic(eps, 2.0**dist.upper) / n,
        "exact formula at distance lower end",
        "exact formula at distance upper end",
    )
    return ExponentReport(
        n=n,
        m=m,
        delta=delta,
        epsilon=eps,
        bracket=sandwich(eps, dist.lower, dist.upper, n),
        distance=dist,
        beta=beta,
        sources={"lower": _source(dist.lower_certificate), "upper": _source(dist.upper_certificate)},
    )


def measured_separable_distance(rho, n: int = 1, dims=None, rng=None) -> tuple[Bracket, Bracket]:
    """Brackets on the separable distance under separable measurements and under all measurements.

    The measured upper end evaluates the measured metric at the best separable
    candidate from the full problem, so it never exceeds the full upper end.
    The lower end is the trivial 0.
    """
    full, rn, dn = separable_distance(rho, n, dims, rng=rng)
    cert = full.upper_certificate
    if cert is None or not np.isfinite(full.upper):
        return Bracket(0.0, np.inf, "nonnegativity", None), full
    sigma = cert.matrix()
    sigma = sigma / np.real(np.trace(sigma))
    meas = d_omega_measured(rn, sigma, MeasurementClass.sep(dn), rng=rng)
    upper = min(meas.upper, full.upper)
    return Bracket(0.0, upper, "nonnegativity", ("measured at separable candidate", meas)), full


def dne_exponent_bracket(rho, n: int = 1, m: int = 2, delta: float = 0.0, dims=None, rng=None) -> ExponentReport:
    """As ``distill_exponent_bracket`` with the separable distance measured by separable POVMs.

    Both the converse threshold and the achievability threshold are reported;
    the bracket uses the converse one.
    """
    eps = error_threshold(m, delta)
    eps_ach = achievability_threshold(m, delta)
    meas, full = measured_separable_distance(rho, n, dims, rng=rng)
    beta = Bracket(
        beta_hat_analytic(eps, 2.0**meas.lower) / n,
        beta_hat_analytic(eps, 2.0**meas.upper) / n,
    )
    return ExponentReport(
        n=n,
        m=m,
        delta=delta,
        epsilon=eps,
        bracket=sandwich(eps, meas.lower, meas.upper, n),
        distance=meas,
        beta=beta,
        sources={"lower": "nonnegativity", "upper": "separable measurements at separable candidate"},
        extra={
            "converse_threshold": eps,
            "achievability_threshold": eps_ach,
            "achievability_bracket": sandwich(eps_ach, meas.lower, meas.upper, n),
            "all_measurements_distance": full,
        },
    )


def werner_exponent(p: float) -> float:
    """``max(0, log2((1 - p) / p))`` with ``p = 0`` giving ``inf``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == 0:
        return np.inf
    if p >= 0.5:
        return 0.0
    return float(np.log2((1 - p) / p))


# --- one-shot cost -------------------------------------------------------


def smoothed_dmax_ppt_program(rho, dims, eps: float):
    """min tr S over S PPT, S >= r', r' a state with trace distance <= eps from rho."""
    d = rho.shape[0]
    real = bool(np.max(np.abs(np.imag(rho))) == 0)
    m = Model()
    s = m.hermitian(d, real=real)
    m.psd(s)
    m.psd(s.apply(lambda x: mc.partial_transpose(x, dims)))
    if eps > 0:
        p = m.hermitian(d, real=real)
        q = m.hermitian(d, real=real)
        m.psd(p)
        m.psd(q)
        m.psd(s - (p - q) - rho)
        m.psd(rho + p - q)
        m.equal(p.trace_with(np.eye(d)) - q.trace_with(np.eye(d)), 0.0)
        m.nonneg(eps - p.trace_with(np.eye(d)))
    else:
        m.psd(s - rho)
    m.minimize(s.trace_with(np.eye(d)))
    return m.build()


@dataclass
class CostBound:
    bound: float
    smoothed_value: float
    unsmoothed_value: float
    epsilon: float
    phi: float
    vacuous: bool

    def __float__(self):
        return float(self.bound)


def dmax_sep_ppt(rho, dims=None, eps: float = 0.0, gap_tol: float = 1e-9) -> float:
    """Certified lower bound (bits) on the smoothed separable max-relative entropy via the PPT cone.

    Uses the smaller of primal and dual values so that solver slack only
    makes the bound more conservative.
    """
    r = mc.hermitize(mc.check_state(rho, substate=False))
    dims = mc.resolve_dims(r, dims)
    sol = solve(smoothed_dmax_ppt_program(r, dims, eps), gap_tol=gap_tol)
    val = min(sol.primal_value, sol.dual_value)
    return float(np.log2(val)) if val > 0 else -np.inf


def cost_lower_bound(rho, epsilon: float, phi: float, dims=None) -> CostBound:
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    if phi <= 0:
        raise ValueError("phi must be positive")
    smoothed = dmax_sep_ppt(rho, dims, epsilon)
    plain = smoothed if epsilon == 0 else dmax_sep_ppt(rho, dims, 0.0)
    bound = smoothed - 2 * phi
    return CostBound(bound, smoothed, plain, epsilon, phi, bound <= 0)


@dataclass
class CostGapReport:
    subchannel: DilSubchannel
    verdict: MembershipVerdict
    overhead_ebits: float
    source_m: int


def cost_gap_witness(s_ne: DilSubchannel, eps: float, rng=None) -> CostGapReport:
    """Turn a certified NE dilution subchannel into a certified DNE one with the same ``gamma``.

    Raises ``PreconditionViolation`` unless the input is NE-certified and
    ``ConversionUnknown`` unless the output is DNE-certified.
    """
    ne = ne_check_dil(s_ne, eps, rng)
    if ne.verdict != "yes":
        raise PreconditionViolation(f"input subchannel is not certified nonentangling (verdict {ne.verdict})")
    out = ne_to_dne(s_ne)
    verdict = dne_check_dil(out, eps, rng)
    if verdict.verdict != "yes":
        raise ConversionUnknown(f"converted subchannel verdict is {verdict.verdict}")
    overhead = float(np.log2(out.m) - np.log2(s_ne.m))
    return CostGapReport(out, verdict, overhead, s_ne.m)


@dataclass
class CostChain:
    log_m: float
    rhs: float
    distance: Bracket
    dmax_delta_gamma: float

    @property
    def holds(self) -> bool:
        return self.log_m >= self.rhs - 1e-9


def cost_chain_check(s: DilSubchannel, phi: float, rng=None) -> CostChain:
    """``log2 m >= D_sep(gamma) - phi - D_max(delta, gamma)`` for a nonentangling dilution subchannel.

    Uses the certified lower end of the separable distance of ``gamma`` so a
    failed check is a genuine violation. Raises ``PreconditionViolation``
    unless the subchannel is certified nonentangling at budget ``phi``.
    """
    # the membership test is strict, so a budget exactly at phi may come back undecided
    v = ne_check_dil(s, phi * (1 + 1e-6) + 1e-9, rng)
    if v.verdict != "yes":
        raise PreconditionViolation(f"subchannel is not certified nonentangling at {phi} (verdict {v.verdict})")
    dist = d_omega_sep(s.gamma, s.dims, rng=rng)
    dm = d_max(s.delta, s.gamma).value
    return CostChain(float(np.log2(s.m)), dist.lower - phi - dm, dist, dm)
