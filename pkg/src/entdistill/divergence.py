"""Max-relative entropy, its symmetrized form, and related divergences.

All logarithms are base 2. ``d_omega`` is the sum of the two max-relative
entropies ``d_max(rho, sigma) + d_max(sigma, rho)``; it is finite exactly
when the two operators have the same support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matcore as mc
from .errors import InvalidOperator, RankDeficient, SupportMismatch, TraceMismatch, ZeroOperator
from .sdp import Model, solve

SUPPORT_TOL = 1e-9
METHODS = ("eigen_closed_form", "sdp", "classical")


@dataclass
class DivergenceValue:
    value: float
    finite: bool
    method: str

    def __float__(self):
        return float(self.value)


def _psd(x, name="operator") -> np.ndarray:
    a = mc.hermitize(mc.check_hermitian(x))
    w = np.linalg.eigvalsh(a)
    if w.size and w[0] < -mc.PSD_TOL * max(1.0, abs(w[-1])):
        raise InvalidOperator(f"{name} is not positive (min eigenvalue {w[0]:.3e})")
    if not w.size or w[-1] <= 0:
        raise ZeroOperator(f"{name} is zero")
    return a


def _pair(rho, sigma):
    r, s = _psd(rho, "rho"), _psd(sigma, "sigma")
    if r.shape != s.shape:
        raise InvalidOperator(f"shape mismatch {r.shape} vs {s.shape}")
    return r, s


def _support(a):
    """Eigenvectors of the support and of the kernel, plus support eigenvalues."""
    w, v = np.linalg.eigh(a)
    keep = w > SUPPORT_TOL * w[-1]
    return v[:, keep], v[:, ~keep], w[keep]


def support_contained(rho, sigma) -> bool:
    """Whether supp(rho) lies inside supp(sigma), up to the support tolerance."""
    r, s = _pair(rho, sigma)
    _, ker, _ = _support(s)
    if ker.shape[1] == 0:
        return True
    leak = np.linalg.norm(ker.conj().T @ r @ ker, 2)
    return leak <= SUPPORT_TOL * np.linalg.norm(r, 2)


def same_support(rho, sigma) -> bool:
    return support_contained(rho, sigma) and support_contained(sigma, rho)


def max_ratio(rho, sigma) -> float:
    """Largest eigenvalue of sigma^{-1/2} rho sigma^{-1/2} on supp(sigma), or inf."""
    r, s = _pair(rho, sigma)
    if not support_contained(r, s):
        return np.inf
    sup, _, w = _support(s)
    m = sup.conj().T @ r @ sup / np.sqrt(np.outer(w, w))
    return float(np.linalg.eigvalsh(mc.hermitize(m))[-1])


def _log2(x: float) -> float:
    return float(np.log2(x)) if np.isfinite(x) else np.inf


def _is_real(*ops) -> bool:
    return all(np.max(np.abs(np.imag(o)), initial=0.0) == 0.0 for o in ops)


def dmax_program(rho, sigma):
    """max tr(rho X) s.t. tr(sigma X) <= 1, X >= 0."""
    m = Model()
    x = m.hermitian(rho.shape[0], real=_is_real(rho, sigma))
    m.psd(x)
    m.nonneg(1 - x.trace_with(sigma))
    m.maximize(x.trace_with(rho))
    return m.build()


def d_max(rho, sigma, method: str = "eigen_closed_form", gap_tol: float = 1e-9) -> DivergenceValue:
    """Max-relative entropy ``log2 min{l : rho <= l sigma}``.

    ``method="eigen_closed_form"`` uses the generalized eigenvalue on the
    support of ``sigma``; ``method="sdp"`` solves the dual program
    ``max tr(rho X)`` subject to ``tr(sigma X) <= 1``. Infinite when
    supp(rho) is not inside supp(sigma).
    """
    r, s = _pair(rho, sigma)
    if method in ("eigen", "eigen_closed_form"):
        v = _log2(max_ratio(r, s))
        return DivergenceValue(v, bool(np.isfinite(v)), "eigen_closed_form")
    if method == "sdp":
        sol = solve(dmax_program(r, s), gap_tol=gap_tol)
        if sol.status == "unbounded":
            return DivergenceValue(np.inf, False, "sdp")
        return DivergenceValue(_log2(sol.primal_value), True, "sdp")
    raise ValueError(f"unknown method {method!r}")


def domega_program(rho, sigma):
    """sup tr(A rho) s.t. tr(B rho) = 1, tr((B - A) sigma) >= 0, A, B >= 0."""
    m = Model()
    real = _is_real(rho, sigma)
    a = m.hermitian(rho.shape[0], real=real)
    b = m.hermitian(rho.shape[0], real=real)
    m.psd(a)
    m.psd(b)
    m.equal(b.trace_with(rho), 1.0)
    m.nonneg((b - a).trace_with(sigma))
    m.maximize(a.trace_with(rho))
    return m.build()


def d_omega(rho, sigma, method: str = "eigen_closed_form", gap_tol: float = 1e-9) -> DivergenceValue:
    r, s = _pair(rho, sigma)
    if method in ("eigen", "eigen_closed_form"):
        if not same_support(r, s):
            return DivergenceValue(np.inf, False, "eigen_closed_form")
        v = _log2(max_ratio(r, s)) + _log2(max_ratio(s, r))
        return DivergenceValue(max(v, 0.0), True, "eigen_closed_form")
    if method == "sdp":
        sol = solve(domega_program(r, s), gap_tol=gap_tol)
        if sol.status == "unbounded":
            return DivergenceValue(np.inf, False, "sdp")
        return DivergenceValue(_log2(sol.primal_value), True, "sdp")
    raise ValueError(f"unknown method {method!r}")


def d_omega_classical(p, q) -> DivergenceValue:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise InvalidOperator("distributions must be 1-d arrays of equal length")
    if np.any(p < -mc.PSD_TOL) or np.any(q < -mc.PSD_TOL):
        raise InvalidOperator("negative probability")
    if p.max() <= 0 or q.max() <= 0:
        raise ZeroOperator("zero distribution")
    sp = p > SUPPORT_TOL * p.max()
    sq = q > SUPPORT_TOL * q.max()
    if np.any(sp != sq):
        return DivergenceValue(np.inf, False, "classical")
    ratio = p[sp] / q[sp]
    v = float(np.log2(ratio.max()) - np.log2(ratio.min()))
    return DivergenceValue(max(v, 0.0), True, "classical")


def _log_on_support(a):
    return mc.mat_function(a, np.log2, rel_tol=SUPPORT_TOL)


def rel_entropy(rho, sigma) -> DivergenceValue:
    """Umegaki relative entropy ``tr rho (log2 rho - log2 sigma)``."""
    r, s = _pair(rho, sigma)
    if not support_contained(r, s):
        return DivergenceValue(np.inf, False, "eigen_closed_form")
    v = np.real(np.trace(r @ (_log_on_support(r) - _log_on_support(s))))
    return DivergenceValue(float(v), True, "eigen_closed_form")


def sandwiched_renyi(alpha: float, rho, sigma) -> DivergenceValue:
    """``alpha/(alpha-1) log2 || sigma^g rho sigma^g ||_alpha`` with ``g = (1-alpha)/(2 alpha)``."""
    if alpha <= 0 or alpha == 1:
        raise ValueError("alpha must be positive and different from 1")
    r, s = _pair(rho, sigma)
    if alpha > 1 and not support_contained(r, s):
        return DivergenceValue(np.inf, False, "eigen_closed_form")
    g = (1 - alpha) / (2 * alpha)
    sg = mc.mat_function(s, lambda w: w**g, rel_tol=SUPPORT_TOL)
    w = np.clip(np.linalg.eigvalsh(mc.hermitize(sg @ r @ sg)), 0.0, None)
    q = float(np.sum(w**alpha))
    if q <= 0:
        return DivergenceValue(np.inf, False, "eigen_closed_form")
    return DivergenceValue(float(np.log2(q) / (alpha - 1)), True, "eigen_closed_form")


def rel_entropy_variance(rho, sigma) -> float:
    """``tr rho (log2 rho - log2 sigma - D)^2`` in squared bits."""
    r, s = _pair(rho, sigma)
    if not support_contained(r, s):
        return np.inf
    d = rel_entropy(r, s).value
    op = _log_on_support(r) - _log_on_support(s) - d * np.eye(r.shape[0])
    return float(np.real(np.trace(r @ op @ op)))


def smoothing_point(rho, sigma, lam: float) -> tuple[float, np.ndarray]:
    """Smoothing construction at threshold ``lam`` (in bits).

    With ``P = (rho - 2^lam sigma)_+`` returns ``eps = tr(P) / 2^(lam+1)``
    and the operator ``(P + 2^lam sigma) / 2^lam``. The operator dominates
    ``rho / 2^lam``, so ``d_max(rho, .) <= lam``, and lies at half trace
    distance ``eps`` from ``sigma``. It is not renormalized.
    """
    r, s = _pair(rho, sigma)
    c = 2.0**lam
    pos = mc.positive_part(r - c * s)
    eps = float(np.real(np.trace(pos))) / (2 * c)
    return eps, (pos + c * s) / c


def _eig_extremes(a):
    w = np.linalg.eigvalsh(mc.hermitize(a))
    return w[0], w[-1]


def lhl_bound(rho, sigma, eps: float) -> float:
    """Upper bound on ``|d_omega(rho + eps I, sigma) - d_omega(rho, sigma)|`` for full-rank inputs."""
    r, s = _pair(rho, sigma)
    rmin, rmax = _eig_extremes(r)
    smin, smax = _eig_extremes(s)
    scale = max(rmax, smax)
    if rmin <= SUPPORT_TOL * scale or smin <= SUPPORT_TOL * scale:
        raise RankDeficient("perturbation bound needs full-rank rho and sigma")
    rs = max_ratio(r, s)
    sr = max_ratio(s, r)
    first = rs / rmin * abs(rmin / smin - rs)
    second = rmax * sr / rmax * (1 / smin - 1 / smax)
    return float(eps * max(first, second))


def lhl_observed(rho, sigma, eps: float) -> float:
    r, s = _pair(rho, sigma)
    shifted = r + eps * np.eye(r.shape[0])
    return abs(d_omega(shifted, s).value - d_omega(r, s).value)


def l18_bound(rho, sigma) -> float:
    """Trace-norm bound ``tr(sigma) * min(2^D - 1, 2)`` with ``D = d_omega(rho, sigma)``.

    Requires equal traces and equal supports.
    """
    r, s = _pair(rho, sigma)
    tr_r, tr_s = np.real(np.trace(r)), np.real(np.trace(s))
    if abs(tr_r - tr_s) > mc.TRACE_TOL * max(1.0, tr_s):
        raise TraceMismatch(f"traces differ: {tr_r} vs {tr_s}")
    if not same_support(r, s):
        raise SupportMismatch("rho and sigma must have the same support")
    d = d_omega(r, s).value
    return float(tr_s * min(2.0**d - 1, 2.0))
