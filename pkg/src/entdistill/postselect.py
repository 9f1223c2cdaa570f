"""Three-outcome (postselected) tests and the exponents they define.

Outcome 0 abstains. Errors are conditioned on not abstaining:

* ``type1 = tr(M2 sigma) / tr((M1 + M2) sigma)``, the error on the null
  hypothesis ``sigma`` (the separable side),
* ``type2 = tr(M1 rho) / tr((M1 + M2) rho)``, the error on the tested state.

``beta_hat`` is the best exponent ``-log2 type2`` subject to ``type1 <= eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from math import comb

import numpy as np

from . import matcore as mc
from .bracket import Bracket
from .divergence import d_omega, d_omega_classical
from .errors import DegenerateAbstention, InvalidOperator, RankDeficient, SizeGuard
from .sdp import Model, bisect_feasible, is_feasible, solve
from .sepset import sep_sup_ratio

MASS_TOL = 1e-12
MAX_BRUTEFORCE_DIM = 9
MAX_EXPONENT = 64.0


@dataclass
class PostselectedTest:
    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray

    def __post_init__(self):
        ops = [mc.hermitize(mc.check_hermitian(x)) for x in (self.m0, self.m1, self.m2)]
        self.m0, self.m1, self.m2 = ops
        d = ops[0].shape[0]
        for name, x in zip(("m0", "m1", "m2"), ops):
            if np.linalg.eigvalsh(x)[0] < -mc.PSD_TOL:
                raise InvalidOperator(f"{name} is not positive")
        if np.max(np.abs(sum(ops) - np.eye(d))) > 1e-10:
            raise InvalidOperator("test elements do not sum to the identity")
        if np.linalg.eigvalsh(np.eye(d) - ops[1] - ops[2])[0] < -1e-10:
            raise InvalidOperator("m1 + m2 exceeds the identity")

    @classmethod
    def from_pair(cls, m1, m2) -> "PostselectedTest":
        """Complete ``(m1, m2)`` with the abstention element ``I - m1 - m2``."""
        m1, m2 = mc.as_array(m1), mc.as_array(m2)
        return cls(np.eye(m1.shape[0]) - m1 - m2, m1, m2)


class Kind(str, Enum):
    ALL = "all"
    SEP = "sep"
    PINCHING = "pinching"


@dataclass
class MeasurementClass:
    kind: Kind
    sigma: np.ndarray | None = None
    dims: tuple | None = None

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if self.kind is Kind.PINCHING and self.sigma is None:
            raise InvalidOperator("pinching class needs its reference operator")

    @classmethod
    def all(cls):
        return cls(Kind.ALL)

    @classmethod
    def sep(cls, dims=None):
        return cls(Kind.SEP, dims=dims)

    @classmethod
    def pinching(cls, sigma):
        return cls(Kind.PINCHING, sigma=mc.as_array(sigma))


def conditional_errors(t: PostselectedTest, rho, sigma) -> tuple[float, float]:
    """``(type1, type2)``; type1 is evaluated on ``sigma``, type2 on ``rho``."""
    r, s = mc.as_array(rho), mc.as_array(sigma)
    keep = t.m1 + t.m2
    mass_r = float(np.real(np.trace(keep @ r)))
    mass_s = float(np.real(np.trace(keep @ s)))
    if mass_r <= MASS_TOL or mass_s <= MASS_TOL:
        raise DegenerateAbstention(
            f"non-abstention mass too small (rho: {mass_r:.3e}, sigma: {mass_s:.3e})"
        )
    type1 = float(np.real(np.trace(t.m2 @ s))) / mass_s
    type2 = float(np.real(np.trace(t.m1 @ r))) / mass_r
    return type1, type2


def beta_hat_analytic(epsilon: float, omega_hat: float) -> float:
    """``log2(1 + eps / (1 - eps) * omega_hat)``."""
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if omega_hat < 1.0 - 1e-12:
        raise ValueError(f"omega_hat must be at least 1, got {omega_hat}")
    if not np.isfinite(omega_hat):
        return np.inf
    return float(np.log2(1.0 + epsilon / (1.0 - epsilon) * omega_hat))


def _errors_program(epsilon, rho, sigma, t):
    """Margin program: M1, M2 >= 0, tr((M1+M2) rho) = 1, tr(M1 rho) <= t,
    tr(M2 sigma) <= eps tr((M1+M2) sigma).

    Margins are measured in units of ``t`` so the feasibility tolerance is
    relative to the type-II level even when it is tiny.
    """
    d = rho.shape[0]
    real = np.max(np.abs(rho.imag)) == 0 and np.max(np.abs(sigma.imag)) == 0
    m = Model()
    m1 = m.hermitian(d, real=real)
    m2 = m.hermitian(d, real=real)
    s = m.scalar()
    eye = np.eye(d)
    m.psd(m1 - s.times(t * eye))
    m.psd(m2 - s.times(t * eye))
    m.equal((m1 + m2).trace_with(rho), 1.0)
    m.nonneg(t - m1.trace_with(rho) - s * t)
    m.nonneg(epsilon * (m1 + m2).trace_with(sigma) - m2.trace_with(sigma) - s * t)
    m.maximize(s)
    return m.build(), (m1, m2)


def beta_hat_bruteforce(epsilon: float, rho, sigma, tol: float = 1e-6, gap_tol: float = 1e-9) -> Bracket:
    """Bracket on ``beta_hat`` by bisection over the conditional type-II error.

    The test is searched with the scale fixed by ``tr((M1+M2) rho) = 1``;
    conditional errors are scale-invariant, so any feasible pair rescales
    to a valid test with ``M1 + M2 <= I``. Feasibility is monotone in the
    type-II level ``t = 2^v``; the bisection runs in ``v``.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    r = mc.hermitize(mc.check_hermitian(rho))
    s = mc.hermitize(mc.check_hermitian(sigma))
    if r.shape[0] > MAX_BRUTEFORCE_DIM:
        raise SizeGuard(f"brute force limited to dimension {MAX_BRUTEFORCE_DIM}")
    r, s = r / np.trace(r).real, s / np.trace(s).real

    def builder(v):
        return _errors_program(epsilon, r, s, 2.0**v)[0]

    def feasible(v):
        return is_feasible(solve(builder(v), gap_tol=gap_tol))

    lo = -1.0
    while feasible(lo):
        lo *= 2
        if lo < -MAX_EXPONENT:
            return Bracket(np.inf, np.inf, f"feasible down to type-II error 2^{lo}", None)
    br = bisect_feasible(builder, lo, 0.0, tol=tol, gap_tol=gap_tol)
    return Bracket(-br.upper, -br.lower, br.upper_certificate, br.lower_certificate)


def rescale_to_test(epsilon, rho, sigma, v, x) -> PostselectedTest:
    """Rescale a feasible ``(M1, M2)`` from the search into a valid test."""
    _, (m1e, m2e) = _errors_program(epsilon, rho, sigma, 2.0**v)
    m1 = mc.clip_psd(mc.hermitize(m1e.value(x)))
    m2 = mc.clip_psd(mc.hermitize(m2e.value(x)))
    scale = np.linalg.eigvalsh(m1 + m2)[-1]
    return PostselectedTest.from_pair(m1 / scale, m2 / scale)


# --- measured versions ----------------------------------------------------


def spectral_projectors(sigma) -> list[np.ndarray]:
    return mc.eig_hermitian(sigma).projectors()


def pinch(rho, sigma) -> np.ndarray:
    """``sum_l P_l rho P_l`` over the spectral projectors of ``sigma``."""
    r = mc.as_array(rho)
    return sum(p @ r @ p for p in spectral_projectors(sigma))


def spectrum_size(sigma) -> int:
    return len(mc.eig_hermitian(sigma).clusters)


def _pinched_distributions(rho, sigma):
    """Joint eigenbasis of ``sigma`` and its pinching of ``rho``, as two distributions."""
    dec = mc.eig_hermitian(sigma)
    r = mc.as_array(rho)
    p, q = [], []
    for mean, idx in dec.clusters:
        v = dec.eigenvectors[:, idx]
        block = mc.hermitize(v.conj().T @ r @ v)
        p.extend(np.linalg.eigvalsh(block))
        q.extend(dec.eigenvalues[idx])
    return np.clip(np.array(p), 0, None), np.clip(np.array(q), 0, None)


def d_omega_pinched(rho, sigma) -> float:
    """``d_omega(P_sigma(rho), sigma)`` computed on the commuting distributions."""
    p, q = _pinched_distributions(rho, sigma)
    return d_omega_classical(p, q).value


@dataclass
class MeasuredDetail:
    forward: Bracket | None = None
    backward: Bracket | None = None
    notes: list = field(default_factory=list)


def d_omega_measured(rho, sigma, cls: MeasurementClass, rng=None) -> Bracket:
    """Bracket on the Hilbert metric after measurements from ``cls``.

    ALL gives ``d_omega`` itself. PINCHING gives the exact value on the
    pinched pair. SEP uses the fact that the best measurement needs only
    two separable elements (the rest of the POVM stays separable when they
    are scaled down), so the value is the sum of the logs of the separable
    supremum ratios in both directions.
    """
    r, s = mc.as_array(rho), mc.as_array(sigma)
    if cls.kind is Kind.ALL:
        v = d_omega(r, s).value
        return Bracket(v, v, "d_omega", "d_omega")
    if cls.kind is Kind.PINCHING:
        ref = cls.sigma
        if np.allclose(ref, s, atol=1e-14):
            v = d_omega_pinched(r, s)
        else:
            v = d_omega(pinch(r, ref), pinch(s, ref)).value
        return Bracket(v, v, "pinched", "pinched")
    dims = mc.resolve_dims(rho, cls.dims)
    full = d_omega(r, s).value
    fwd = sep_sup_ratio(r, s, dims, rng=rng)
    bwd = sep_sup_ratio(s, r, dims, rng=rng)
    lower = float(np.log2(fwd.lower) + np.log2(bwd.lower)) if fwd.lower > 0 and bwd.lower > 0 else 0.0
    upper = float(np.log2(fwd.upper) + np.log2(bwd.upper))
    upper = min(upper, full)
    lower = max(min(lower, upper), 0.0)
    return Bracket(lower, upper, MeasuredDetail(fwd, bwd), MeasuredDetail(fwd, bwd, ["min with d_omega"]))


@dataclass
class PinchingSandwich:
    lhs: float
    mid: float
    rhs: float

    @property
    def right_holds(self) -> bool:
        return self.mid >= self.rhs - 1e-8

    @property
    def left_holds(self) -> bool:
        return self.lhs >= self.mid - 1e-8

    @property
    def holds(self) -> bool:
        return self.left_holds and self.right_holds

    def __iter__(self):
        return iter((self.lhs, self.mid, self.rhs))


def mhb_check(rho, sigma) -> PinchingSandwich:
    """``(log2|spec(sigma)| + D_pinch, d_omega, D_pinch)`` for full-rank ``sigma``.

    ``D_pinch`` is the metric after the pinching measurement of ``sigma``.
    The right inequality always holds (data processing). The left one is
    checked, not assumed: see ``PinchingSandwich.left_holds``.
    """
    s = mc.hermitize(mc.check_hermitian(sigma))
    w = np.linalg.eigvalsh(s)
    if w[0] <= 1e-12 * w[-1]:
        raise RankDeficient("sigma must be full rank")
    dp = d_omega_pinched(rho, s)
    mid = d_omega(rho, s).value
    return PinchingSandwich(float(np.log2(spectrum_size(s)) + dp), mid, dp)


def spectrum_bound(k: int, d: int) -> int:
    """Upper bound ``C(k + d - 1, d - 1)`` on the spectrum size of a k-fold tensor power."""
    return comb(k + d - 1, d - 1)


def pinching_trend(rho, sigma, kmax: int = 3) -> list[float]:
    """Per-copy pinched metric ``D_pinch(rho^k, sigma^k) / k`` for ``k = 1..kmax``."""
    r, s = mc.as_array(rho), mc.as_array(sigma)
    out = []
    rk, sk = r, s
    for k in range(1, kmax + 1):
        if k > 1:
            rk, sk = np.kron(rk, r), np.kron(sk, s)
        out.append(d_omega_pinched(rk, sk) / k)
    return out
