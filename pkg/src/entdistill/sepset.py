"""Bounds on quantities optimized over separable states.

Every upper bound is attained by an explicit separable decomposition (a
weighted list of product vectors), and every lower bound comes from a
relaxation to PPT operators or from a decomposable entanglement witness.
At dimensions 2x2 and 2x3 the two sides meet.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as iproduct

import numpy as np

from . import matcore as mc
from .bracket import Bracket
from .divergence import d_omega, max_ratio, same_support
from .errors import InfiniteValue, InvalidOperator, NumericalBreakdown, SizeGuard, UnboundedRatio, ZeroOperator
from .sdp import Affine, Model, bisect_feasible, is_feasible, solve

PPT_TOL = 1e-9
ASCENT_RESTARTS = 32
ASCENT_SWEEPS = 200
ASCENT_TOL = 1e-9
MAX_WITNESS_COPIES = 3


@dataclass
class WernerPoint:
    p: float
    d: int

    def __post_init__(self):
        if not (-1e-12 <= self.p <= 1 + 1e-12) or self.d < 2:
            raise InvalidOperator(f"invalid Werner point p={self.p}, d={self.d}")

    def state(self) -> np.ndarray:
        return mc.werner_state(self.p, self.d)


@dataclass
class SeparableDecomposition:
    """``sum_k weights[k] |a_k><a_k| (x) |b_k><b_k|`` with unit vectors."""

    dims: tuple
    weights: np.ndarray
    vecs_a: np.ndarray
    vecs_b: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.vecs_a = np.asarray(self.vecs_a, dtype=complex).reshape(len(self.weights), -1)
        self.vecs_b = np.asarray(self.vecs_b, dtype=complex).reshape(len(self.weights), -1)
        self.vecs_a /= np.linalg.norm(self.vecs_a, axis=1, keepdims=True)
        self.vecs_b /= np.linalg.norm(self.vecs_b, axis=1, keepdims=True)
        if np.any(self.weights < 0):
            raise InvalidOperator("negative weight in separable decomposition")

    def matrix(self) -> np.ndarray:
        v = np.einsum("ki,kj->kij", self.vecs_a, self.vecs_b).reshape(len(self.weights), -1)
        return (v.T * self.weights) @ v.conj()

    def normalized(self) -> "SeparableDecomposition":
        return SeparableDecomposition(
            self.dims, self.weights / self.weights.sum(), self.vecs_a, self.vecs_b, self.label
        )

    def tensor(self, other: "SeparableDecomposition") -> "SeparableDecomposition":
        """Product decomposition on (A A')(B B')."""
        w = np.outer(self.weights, other.weights).ravel()
        a = np.einsum("ki,lj->klij", self.vecs_a, other.vecs_a).reshape(len(w), -1)
        b = np.einsum("ki,lj->klij", self.vecs_b, other.vecs_b).reshape(len(w), -1)
        dims = (self.dims[0] * other.dims[0], self.dims[1] * other.dims[1])
        return SeparableDecomposition(dims, w, a, b, f"{self.label}x{other.label}")

    def power(self, n: int) -> "SeparableDecomposition":
        out = self
        for _ in range(n - 1):
            out = out.tensor(self)
        return out

    def pruned(self, tol: float = 1e-14) -> "SeparableDecomposition":
        keep = self.weights > tol * self.weights.max()
        return SeparableDecomposition(
            self.dims, self.weights[keep], self.vecs_a[keep], self.vecs_b[keep], self.label
        )


# --- basic tests --------------------------------------------------------


def ppt_min_eig(x, dims=None) -> float:
    a = mc.as_array(x)
    tr = float(np.real(np.trace(a)))
    if tr > 0:
        a = a / tr
    return float(np.linalg.eigvalsh(mc.hermitize(mc.partial_transpose(a, mc.resolve_dims(x, dims))))[0])


def is_ppt(x, dims=None) -> bool:
    """Partial transpose (normalized) has no eigenvalue below ``-PPT_TOL``."""
    return ppt_min_eig(x, dims) >= -PPT_TOL


# --- explicit separable families ----------------------------------------


def qubit_clifford_group() -> list[np.ndarray]:
    """The 24 single-qubit Clifford unitaries modulo phase (a unitary 2-design)."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    s = np.array([[1, 0], [0, 1j]], dtype=complex)

    def key(u):
        k = np.argmax(np.abs(u.ravel()) > 1e-9)
        v = u * (abs(u.ravel()[k]) / u.ravel()[k])
        return tuple(np.round(v.ravel(), 8))

    group = {key(np.eye(2)): np.eye(2, dtype=complex)}
    frontier = [np.eye(2, dtype=complex)]
    while frontier:
        nxt = []
        for u in frontier:
            for g in (h, s):
                v = g @ u
                k = key(v)
                if k not in group:
                    group[k] = v
                    nxt.append(v)
        frontier = nxt
    return list(group.values())


def _twirled(a, b, conj_b: bool, label: str) -> SeparableDecomposition:
    us = qubit_clifford_group()
    va = np.array([u @ a for u in us])
    vb = np.array([(u.conj() if conj_b else u) @ b for u in us])
    w = np.full(len(us), 1.0 / len(us))
    return SeparableDecomposition((2, 2), w, va, vb, label)


def werner_decomposition(q: float) -> SeparableDecomposition:
    """Explicit decomposition of the qubit Werner state with ``q >= 1/2``."""
    if q < 0.5 - 1e-12 or q > 1 + 1e-12:
        raise InvalidOperator(f"Werner state with p={q} is not separable")
    x = min(max(2 * q - 1, 0.0), 1.0)
    a = np.array([1, 0], dtype=complex)
    b = np.array([np.sqrt(x), np.sqrt(1 - x)], dtype=complex)
    return _twirled(a, b, False, f"werner({q:.6g})")


def isotropic_decomposition(f: float) -> SeparableDecomposition:
    """Explicit decomposition of the two-qubit isotropic state with overlap ``f <= 1/2``."""
    if f < -1e-12 or f > 0.5 + 1e-12:
        raise InvalidOperator(f"isotropic state with overlap {f} is not separable")
    x = min(max(2 * f, 0.0), 1.0)
    a = np.array([1, 0], dtype=complex)
    b = np.array([np.sqrt(x), np.sqrt(1 - x)], dtype=complex)
    return _twirled(a, b, True, f"isotropic({f:.6g})")


def marginal_product_decomposition(rho, dims) -> SeparableDecomposition:
    ra = mc.partial_trace(rho, "B", dims)
    rb = mc.partial_trace(rho, "A", dims)
    wa, va = np.linalg.eigh(mc.hermitize(ra))
    wb, vb = np.linalg.eigh(mc.hermitize(rb))
    wa, wb = np.clip(wa, 0, None), np.clip(wb, 0, None)
    idx = list(iproduct(range(len(wa)), range(len(wb))))
    w = np.array([wa[i] * wb[j] for i, j in idx])
    a = np.array([va[:, i] for i, _ in idx])
    b = np.array([vb[:, j] for _, j in idx])
    return SeparableDecomposition(dims, w, a, b, "marginals").pruned()


def product_operator_decomposition(x, dims, tol: float = 1e-10):
    """Decomposition of ``x`` if it is a tensor product of two PSD operators, else None."""
    a = mc.as_array(x)
    da, db = dims
    r = a.reshape(da, db, da, db).transpose(0, 2, 1, 3).reshape(da * da, db * db)
    u, s, vh = np.linalg.svd(r)
    if s[0] == 0 or (len(s) > 1 and s[1] > tol * s[0]):
        return None
    xa = (u[:, 0] * np.sqrt(s[0])).reshape(da, da)
    xb = (vh[0] * np.sqrt(s[0])).reshape(db, db)
    ph = np.trace(xa) / abs(np.trace(xa)) if abs(np.trace(xa)) > 0 else 1.0
    xa, xb = mc.hermitize(xa / ph), mc.hermitize(xb * ph)
    if np.real(np.trace(xa)) < 0:
        xa, xb = -xa, -xb
    wa, va = np.linalg.eigh(xa)
    wb, vb = np.linalg.eigh(xb)
    if wa[0] < -tol * max(1, wa[-1]) or wb[0] < -tol * max(1, wb[-1]):
        return None
    wa, wb = np.clip(wa, 0, None), np.clip(wb, 0, None)
    idx = list(iproduct(range(da), range(db)))
    w = np.array([wa[i] * wb[j] for i, j in idx])
    return SeparableDecomposition(
        dims, w, np.array([va[:, i] for i, _ in idx]), np.array([vb[:, j] for _, j in idx]), "product"
    ).pruned()


def diagonal_decomposition(x, dims, tol: float = 1e-12):
    """Decomposition of ``x`` if it is diagonal in the product basis, else None."""
    a = mc.as_array(x)
    off = a - np.diag(np.diag(a))
    if np.max(np.abs(off), initial=0.0) > tol * max(1.0, np.max(np.abs(a))):
        return None
    diag = np.real(np.diag(a))
    if np.any(diag < -tol):
        return None
    da, db = dims
    idx = list(iproduct(range(da), range(db)))
    eye_a, eye_b = np.eye(da), np.eye(db)
    return SeparableDecomposition(
        dims,
        np.clip(diag, 0, None),
        np.array([eye_a[i] for i, _ in idx]),
        np.array([eye_b[j] for _, j in idx]),
        "diagonal",
    ).pruned()


# --- two-qubit decomposition via the spin-flip construction ---------------


_SYY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def _takagi(tau, tol: float = 1e-12):
    """Unitary ``V`` and ``s >= 0`` with ``tau = V diag(s) V^T`` for complex symmetric ``tau``.

    Columns ``v`` solve ``tau conj(v) = s v``; they come from the real
    symmetric form ``[[Re, Im], [Im, -Re]]`` whose spectrum is ``+-s``.
    """
    a, b = tau.real, tau.imag
    n = tau.shape[0]
    w, v = np.linalg.eigh(np.block([[a, b], [b, -a]]))
    scale = max(abs(w).max(), 1e-300)
    pos = w > tol * scale
    zero = np.abs(w) <= tol * scale
    cols = v[:n, pos] + 1j * v[n:, pos]
    s = w[pos]
    k = n - cols.shape[1]
    if k:
        null = v[:n, zero] + 1j * v[n:, zero]
        # any complex combination of null vectors stays null; orthonormalize
        null = null - cols @ (cols.conj().T @ null)
        u, sv, _ = np.linalg.svd(null, full_matrices=False)
        cols = np.hstack([cols, u[:, :k]])
        s = np.concatenate([s, np.zeros(k)])
    return cols, s


def wootters_decomposition(rho, tol: float = 1e-9):
    """Product-vector decomposition of a separable two-qubit operator, or None.

    Builds the spin-flip ensemble with the largest preconcurrence first, then
    rotates it into four vectors of zero preconcurrence. Returns None when
    the operator is entangled (or too close to the boundary to resolve).
    """
    r = mc.hermitize(mc.as_array(rho))
    if r.shape != (4, 4):
        return None
    w, v = np.linalg.eigh(r)
    if w[0] < -tol * w[-1]:
        return None
    vecs = v * np.sqrt(np.clip(w, 0, None))
    # tau_jl = <v_j| S |conj(v_l)>
    tau = vecs.conj().T @ _SYY @ vecs.conj()
    tau = (tau + tau.T) / 2
    q, _ = _takagi(tau)
    x = vecs @ q
    pre = np.real(np.einsum("ki,kl,li->i", x.conj(), _SYY, x.conj()))
    order = np.argsort(-np.abs(pre))
    x, pre = x[:, order], pre[order]
    lam = np.abs(pre)
    if lam[0] > lam[1] + lam[2] + lam[3] + tol * max(lam.sum(), 1e-300):
        return None
    # choose phases so that sum_j pre_j e^{-i theta_j} = 0
    theta = _closing_phases(pre)
    y = x * np.exp(1j * theta / 2)
    had = np.array([[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]]) / 2
    z = y @ had.T
    weights, va, vb = [], [], []
    for k in range(4):
        m = z[:, k].reshape(2, 2)
        u, s, vh = np.linalg.svd(m)
        if s[0] <= 0:
            continue
        if s[1] > 1e-6 * s[0]:
            return None
        weights.append(s[0] ** 2)
        va.append(u[:, 0])
        vb.append(vh[0])
    if not weights:
        return None
    return SeparableDecomposition((2, 2), np.array(weights), np.array(va), np.array(vb), "spin-flip")


def _closing_phases(c):
    """Angles with ``sum_j c_j exp(-i theta_j) = 0`` for four reals obeying the polygon inequality."""
    lengths = np.abs(c)
    signs = np.where(c >= 0, 0.0, np.pi)
    l1, l2, l3, l4 = lengths
    lo = max(abs(l3 - l4), abs(l1 - l2))
    hi = min(l3 + l4, l1 + l2)
    length = (lo + hi) / 2 if hi >= lo else hi
    # vectors u1 + u2 = -(u3 + u4) = L e^{i0}
    ang = np.zeros(4)

    def tri(p, q, base):
        # p e^{ia} + q e^{ib} = base (real, >= 0)
        if base <= 0:
            return 0.0, np.pi
        ca = (p * p + base * base - q * q) / (2 * p * base) if p > 0 else 1.0
        a = np.arccos(np.clip(ca, -1, 1))
        cb = (q * q + base * base - p * p) / (2 * q * base) if q > 0 else 1.0
        b = -np.arccos(np.clip(cb, -1, 1))
        return a, b

    ang[0], ang[1] = tri(l1, l2, length)
    a3, a4 = tri(l3, l4, length)
    ang[2], ang[3] = a3 + np.pi, a4 + np.pi
    # c_j e^{-i theta_j} = |c_j| e^{i ang_j}
    return signs - ang


# --- product-state optimization ------------------------------------------


def _reduce_b(m4, b):
    return np.einsum("j,ijkl,l->ik", b.conj(), m4, b)


def _reduce_a(m4, a):
    return np.einsum("i,ijkl,k->jl", a.conj(), m4, a)


def _top_ratio_vector(m, n):
    """Maximize ``x^H m x / x^H n x`` for PSD ``n``; returns (value, x)."""
    w, v = np.linalg.eigh(mc.hermitize(n))
    scale = max(w[-1], np.max(np.abs(m)), 1e-300)
    sup = w > 1e-12 * scale
    if not np.all(sup):
        vk = v[:, ~sup]
        mk = mc.hermitize(vk.conj().T @ m @ vk)
        wk, uk = np.linalg.eigh(mk)
        if wk[-1] > 1e-12 * scale:
            return np.inf, vk @ uk[:, -1]
    if not np.any(sup):
        return 0.0, v[:, -1]
    vs = v[:, sup] / np.sqrt(w[sup])
    c = mc.hermitize(vs.conj().T @ m @ vs)
    wc, uc = np.linalg.eigh(c)
    x = vs @ uc[:, -1]
    return float(wc[-1]), x / np.linalg.norm(x)


def _schmidt_start(vec, dims):
    u, _, vh = np.linalg.svd(vec.reshape(dims))
    return u[:, 0], vh[0].conj()


def ratio_ascent(M, N, dims, rng=None, restarts: int = ASCENT_RESTARTS, sweeps: int = ASCENT_SWEEPS,
                 tol: float = ASCENT_TOL, starts=()):
    """Alternating maximization of ``<ab|M|ab> / <ab|N|ab>`` over product unit vectors.

    Returns ``(value, a, b)``. The value is attained by the returned vectors,
    so it is a valid lower bound on the separable supremum.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    m, n = mc.as_array(M), mc.as_array(N)
    da, db = dims
    m4, n4 = m.reshape(da, db, da, db), n.reshape(da, db, da, db)
    inits = list(starts)
    val0, x0 = _top_ratio_vector(m, n)
    inits.append(_schmidt_start(x0, dims))
    while len(inits) < restarts:
        inits.append((mc.haar_vector(da, rng), mc.haar_vector(db, rng)))
    best = (-np.inf, None, None)
    for a, b in inits:
        val = -np.inf
        for _ in range(sweeps):
            va, a = _top_ratio_vector(_reduce_b(m4, b), _reduce_b(n4, b))
            if va == np.inf:
                val = np.inf
                break
            vb, b = _top_ratio_vector(_reduce_a(m4, a), _reduce_a(n4, a))
            if vb == np.inf:
                val = np.inf
                break
            done = vb - val <= tol * max(1.0, abs(vb))
            val = vb
            if done:
                break
        if val > best[0]:
            best = (val, a, b)
        if val == np.inf:
            break
    return best


def min_product_expectation(W, dims, rng=None, restarts: int = 8, sweeps: int = 100, starts=()):
    """Alternating minimization of ``<ab|W|ab>`` over product unit vectors."""
    rng = np.random.default_rng(0) if rng is None else rng
    w = mc.as_array(W)
    da, db = dims
    w4 = w.reshape(da, db, da, db)
    inits = list(starts)
    ev, evec = np.linalg.eigh(mc.hermitize(w))
    inits.append(_schmidt_start(evec[:, 0], dims))
    while len(inits) < restarts:
        inits.append((mc.haar_vector(da, rng), mc.haar_vector(db, rng)))
    found = []
    for a, b in inits:
        val = np.inf
        for _ in range(sweeps):
            ea, ua = np.linalg.eigh(mc.hermitize(_reduce_b(w4, b)))
            a = ua[:, 0]
            eb, ub = np.linalg.eigh(mc.hermitize(_reduce_a(w4, a)))
            b = ub[:, 0]
            done = val - eb[0] <= 1e-12 * max(1.0, abs(eb[0]))
            val = eb[0]
            if done:
                break
        found.append((float(val), a, b))
    found.sort(key=lambda t: t[0])
    return found


# --- separable ratio ----------------------------------------------------


def _real(*ops):
    return all(np.max(np.abs(np.imag(o)), initial=0.0) == 0.0 for o in ops)


def ppt_ratio_program(M, N, dims):
    """max tr(M X) s.t. tr(N X) = 1, X >= 0, X^{T_B} >= 0."""
    m = Model()
    x = m.hermitian(M.shape[0], real=_real(M, N))
    m.psd(x)
    m.psd(x.apply(lambda y: mc.partial_transpose(y, dims)))
    m.equal(x.trace_with(N), 1.0)
    m.maximize(x.trace_with(M))
    return m.build(), x


def sep_sup_ratio(M, N, dims=None, rng=None, gap_tol: float = 1e-9) -> Bracket:
    """Bracket on ``sup_{X separable} tr(M X) / tr(N X)``.

    Lower end: product-state ascent (certificate: the product vectors).
    Upper end: PPT relaxation (certificate: the solver output). Raises
    ``UnboundedRatio`` if the relaxation is unbounded; the exception carries
    the ascent value.
    """
    m, n = mc.as_array(M), mc.as_array(N)
    dims = mc.resolve_dims(M, dims)
    if np.max(np.abs(m)) == 0:
        return Bracket(0.0, 0.0, "M = 0", "M = 0")
    lo, a, b = ratio_ascent(m, n, dims, rng)
    if lo == np.inf:
        return Bracket(np.inf, np.inf, (a, b), (a, b))
    prog, _ = ppt_ratio_program(m, n, dims)
    sol = solve(prog, gap_tol=gap_tol)
    if sol.status in ("unbounded", "infeasible"):
        raise UnboundedRatio(f"relaxed ratio program is {sol.status}", lower=lo)
    q = mc.clip_psd(mc.hermitize(sol.dual_blocks[1]))
    up = certified_ratio_upper(m, n, q, dims)
    if not np.isfinite(up):
        up = max(sol.dual_value, sol.primal_value)
    return Bracket(lo, max(up, lo), (a, b), q)


def certified_ratio_upper(M, N, Q, dims) -> float:
    """Smallest ``y`` with ``y N - M - Q^{T_B} >= 0`` for PSD ``Q``.

    Any such ``y`` bounds ``tr(M X) / tr(N X)`` over PPT ``X``, because
    ``tr(Q^{T_B} X) = tr(Q X^{T_B}) >= 0``. Infinite when ``N`` is singular
    in a direction where the left side is positive.
    """
    rhs = mc.hermitize(mc.as_array(M) + mc.partial_transpose(Q, dims))
    w, v = np.linalg.eigh(mc.hermitize(N))
    if w[0] <= 1e-12 * w[-1]:
        return np.inf
    ih = v / np.sqrt(w)
    return float(np.linalg.eigvalsh(mc.hermitize(ih.conj().T @ rhs @ ih))[-1])


# --- symmetrized divergence to the separable set -------------------------


def _normalized_psd(rho):
    r = mc.hermitize(mc.check_hermitian(rho))
    w = np.linalg.eigvalsh(r)
    if w[-1] <= 0:
        raise ZeroOperator("operator is zero")
    if w[0] < -mc.PSD_TOL * w[-1]:
        raise InvalidOperator("operator is not positive")
    return r / np.real(np.trace(r))


def _support_basis(r):
    w, v = np.linalg.eigh(r)
    keep = w > 1e-9 * w[-1]
    return v[:, keep], w[keep]


def ppt_margin_program(rho, dims, lam: float):
    """Margin form of: exists S in the PPT cone with rho <= S <= lam rho.

    ``S`` is parametrized on the support of ``rho``. The optimal margin is
    nonnegative exactly when the PPT version of the ratio ``lam`` is feasible.
    Returns the program and the expression for ``S``.
    """
    v, _ = _support_basis(rho)
    full = v.shape[1] == rho.shape[0]
    if full:
        v = np.eye(rho.shape[0])
    r = v.conj().T @ rho @ v
    k = r.shape[0]
    m = Model()
    sh = m.hermitian(k, real=_real(rho) and _real(v))
    t = m.scalar()
    eye_k = np.eye(k)
    m.psd(sh - r - t.times(eye_k))
    m.psd(lam * r - sh - t.times(eye_k))
    s_full = sh if full else sh.apply(lambda y: v @ y @ v.conj().T)
    m.psd(s_full.apply(lambda y: mc.partial_transpose(y, dims)) - t.times(np.eye(rho.shape[0])))
    m.maximize(t)
    return m.build(), s_full


def ppt_bisection(rho, dims, hi: float, lo: float = 0.0, tol: float = 1e-6,
                  gap_tol: float = 1e-9) -> Bracket:
    """Bisection in ``u = log2(lam)`` on the PPT margin program.

    Returns the bisection bracket; its upper certificate is the PPT operator
    ``S`` found at the upper end.
    """
    exprs = {}

    def builder(u):
        prog, s = ppt_margin_program(rho, dims, 2.0**u)
        exprs[u] = s
        return prog

    br = bisect_feasible(builder, lo, hi, tol=tol, gap_tol=gap_tol)
    s_up = exprs[br.upper].value(br.upper_certificate.x)
    return Bracket(br.lower, br.upper, br.lower_certificate, mc.hermitize(s_up))


def decomposable_witness_program(rho, dims):
    """sup tr(A rho) s.t. tr(B rho) = 1, B - A - Q^{T_B} >= 0, A, B, Q >= 0."""
    m = Model()
    real = _real(rho)
    d = rho.shape[0]
    a = m.hermitian(d, real=real)
    b = m.hermitian(d, real=real)
    q = m.hermitian(d, real=real)
    m.psd(a)
    m.psd(b)
    m.psd(q)
    m.psd(b - a - q.apply(lambda y: mc.partial_transpose(y, dims)))
    m.equal(b.trace_with(rho), 1.0)
    m.maximize(a.trace_with(rho))
    return m.build(), (a, b, q)


def witness_lower(rho, dims, gap_tol: float = 1e-9):
    """Lower bound from the decomposable-witness dual; returns (log2 value, (A, B, Q))."""
    prog, (a, b, q) = decomposable_witness_program(rho, dims)
    try:
        sol = solve(prog, gap_tol=gap_tol)
    except NumericalBreakdown:
        return 0.0, None
    if sol.status == "unbounded":
        return np.inf, None
    if sol.status != "optimal":
        return 0.0, None
    ops = tuple(mc.hermitize(e.value(sol.x)) for e in (a, b, q))
    val = certified_witness_value(*ops, rho, dims)
    return val, ops


def certified_witness_value(A, B, Q, rho, dims) -> float:
    """Witness value after repairing ``(A, B, Q)`` so ``B - A - Q^{T_B} >= 0`` holds exactly.

    ``A`` and ``Q`` are clipped to PSD and ``B`` is shifted up by the
    smallest multiple of ``I`` that restores the constraint; the result is
    a valid lower bound on the separable distance of ``rho``.
    """
    a = mc.clip_psd(mc.hermitize(A), tol=np.inf)
    q = mc.clip_psd(mc.hermitize(Q), tol=np.inf)
    b = mc.hermitize(B)
    gap = np.linalg.eigvalsh(mc.hermitize(b - a - mc.partial_transpose(q, dims)))[0]
    if gap < 0:
        b = b - gap * np.eye(b.shape[0])
    bmin = np.linalg.eigvalsh(b)[0]
    if bmin < 0:
        b = b - bmin * np.eye(b.shape[0])
    return witness_value(a, b, rho)


def witness_value(A, B, rho) -> float:
    """``log2 tr(A rho) / tr(B rho)``; a lower bound whenever ``B - A`` is a valid witness."""
    num = float(np.real(np.trace(A @ rho)))
    den = float(np.real(np.trace(B @ rho)))
    if den <= 0:
        return np.inf if num > 0 else 0.0
    return float(np.log2(max(num, 1e-300) / den))


def _ensure_full_rank(x, eta):
    d = x.shape[0]
    return (1 - eta) * x / np.real(np.trace(x)) + eta * np.eye(d) / d


def _spin_flip_candidate(s, rho):
    """Decompose a (nearly) separable two-qubit operator after a minimal mix with I."""
    for eta in (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3):
        dec = wootters_decomposition(_ensure_full_rank(s, eta) if eta else s / np.trace(s).real)
        if dec is not None:
            return dec
    return None


def column_generation(rho, dims, seeds=(), rng=None, rounds: int = 60, target: float | None = None,
                      gap_tol: float = 1e-9):
    """Inner approximation of the separable optimum by product mixtures.

    Solves ``min lam`` over ``rho <= sum_k w_k P_k <= lam rho`` for a growing
    pool of product projectors ``P_k``, adding the product states with the
    most negative reduced cost after each round. Needs full-rank ``rho``.
    Returns ``(log2 value, decomposition)``.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    da, db = dims
    cols_a, cols_b = [], []
    for i in range(da):
        for j in range(db):
            cols_a.append(np.eye(da)[i].astype(complex))
            cols_b.append(np.eye(db)[j].astype(complex))
    for dec in seeds:
        cols_a.extend(dec.vecs_a)
        cols_b.extend(dec.vecs_b)
    for _ in range(4 * da * db):
        cols_a.append(mc.haar_vector(da, rng))
        cols_b.append(mc.haar_vector(db, rng))
    best = (np.inf, None)
    for _ in range(rounds):
        va, vb = _distinct_columns(cols_a, cols_b)
        vecs = np.einsum("ki,kj->kij", va, vb).reshape(len(va), -1)
        projs = np.einsum("ki,kj->kij", vecs, vecs.conj())
        m = Model()
        w = m.scalars(len(vecs))
        lam = m.scalar()
        for wk in w:
            m.nonneg(wk)
        mix = Affine(np.zeros_like(rho), [int(wk.idx[0]) for wk in w], projs)
        m.psd(mix - rho)
        m.psd(lam.times(rho) - mix)
        m.minimize(lam)
        prog = m.build()
        try:
            sol = solve(prog, gap_tol=gap_tol)
        except NumericalBreakdown:
            break
        if sol.status != "optimal":
            break
        weights = np.clip(np.array([sol.x[int(wk.idx[0])] for wk in w]), 0, None)
        dec = SeparableDecomposition(dims, weights, va, vb, "column-generation").pruned()
        val = d_omega(rho, dec.matrix()).value
        if val < best[0]:
            best = (val, dec)
        if target is not None and best[0] <= target:
            break
        psd_cones = [i for i, c in enumerate(prog.cones) if c.kind == "psd"]
        z1, z2 = sol.dual_blocks[psd_cones[0]], sol.dual_blocks[psd_cones[1]]
        z1 = z1 if np.iscomplexobj(z1) else z1.astype(complex)
        z2 = z2 if np.iscomplexobj(z2) else z2.astype(complex)
        wmat = mc.hermitize(z2 - z1)
        active = np.argsort(-weights)[: 4]
        starts = [(va[k], vb[k]) for k in active]
        found = min_product_expectation(wmat, dims, rng, restarts=12, starts=starts)
        scale = max(np.max(np.abs(wmat)), 1e-300)
        new = [(a, b) for v, a, b in found if v < -1e-10 * scale]
        if not new:
            break
        keep = weights > 1e-12 * max(weights.max(), 1e-300)
        # the product basis stays in the pool so the master remains feasible
        cols_a = list(va[: da * db]) + [a for a, k in zip(va, keep) if k] + [a for a, _ in new[:6]]
        cols_b = list(vb[: da * db]) + [b for b, k in zip(vb, keep) if k] + [b for _, b in new[:6]]
    return best


def _distinct_columns(cols_a, cols_b, tol: float = 1e-10):
    va, vb = [], []
    seen = []
    for a, b in zip(cols_a, cols_b):
        v = np.kron(a, b)
        if any(abs(abs(np.vdot(u, v)) - 1) < tol for u in seen):
            continue
        seen.append(v)
        va.append(a)
        vb.append(b)
    return np.array(va), np.array(vb)


def family_candidates(rho, dims) -> list:
    """Explicit separable candidates from symmetric families and simple structure."""
    da, db = dims
    cands = [marginal_product_decomposition(rho, dims)]
    for fn in (product_operator_decomposition, diagonal_decomposition):
        dec = fn(rho, dims)
        if dec is not None:
            cands.append(dec)
    if da * db <= 6 and ppt_min_eig(rho, dims) >= 0:
        cands.append(PPTOperator(dims, rho, ppt_min_eig(rho, dims), "self"))
        if da == db == 2:
            dec = wootters_decomposition(rho)
            if dec is not None:
                cands.append(dec)
    if da == db == 2:
        p = werner_family(rho, dims).p
        grid = np.unique(np.concatenate([[max(p, 0.5)], np.linspace(0.5, 1.0, 21)]))
        best = min(grid, key=lambda q: d_omega(rho, mc.werner_state(q, 2)).value)
        cands.append(werner_decomposition(best))
        f = isotropic_family(rho, dims)
        grid = np.unique(np.concatenate([[min(f, 0.5)], np.linspace(0.0, 0.5, 21)]))
        best = min(grid, key=lambda g: d_omega(rho, mc.isotropic_state(g, 2)).value)
        cands.append(isotropic_decomposition(best))
    return cands


@dataclass
class PPTOperator:
    """A PPT operator at a dimension where PPT implies separable (2x2, 2x3), or a tensor power of one."""

    dims: tuple
    operator: np.ndarray
    ppt_min_eig: float
    label: str = "ppt-at-low-dimension"

    def matrix(self) -> np.ndarray:
        return self.operator

    def power(self, n: int) -> "PPTOperator":
        x, dims = mc.tensor_power(self.operator, n, self.dims)
        return PPTOperator(dims, x, ppt_min_eig(x, dims), f"{self.label}^{n}")


def _ppt_candidate(s, rho, dims):
    """PPT optimizer made strictly PPT by the smallest mix with I that works."""
    full = _support_basis(rho)[0].shape[1] == rho.shape[0]
    x = s / np.real(np.trace(s))
    etas = (0.0, 1e-12, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6) if full else (0.0,)
    for eta in etas:
        y = _ensure_full_rank(x, eta) if eta else x
        e = ppt_min_eig(y, dims)
        if e >= 0 and np.linalg.eigvalsh(y)[0] >= -1e-15:
            return PPTOperator(dims, y, e)
    return None


@dataclass
class SepSearchOptions:
    bisect_tol: float = 1e-6
    gap_tol: float = 1e-9
    column_rounds: int = 40
    use_witness: bool = True
    use_bisection: bool = True
    extra: dict = field(default_factory=dict)


def d_omega_sep(rho, dims=None, extra_candidates=(), options: SepSearchOptions | None = None,
                rng=None) -> Bracket:
    """Bracket on ``min over separable sigma of d_omega(rho, sigma)`` (in bits).

    Lower end: maximum of a PPT bisection and a decomposable-witness dual.
    Upper end: minimum of ``d_omega(rho, sigma)`` over explicit separable
    ``sigma`` (family candidates, ``extra_candidates``, a spin-flip
    decomposition of the PPT optimizer at 2x2, and column generation). The
    upper certificate is the winning ``SeparableDecomposition``.

    Substates are normalized first. Raises ``InfiniteValue`` if no separable
    operator has the support of ``rho``.
    """
    opt = options or SepSearchOptions()
    r = _normalized_psd(rho)
    dims = mc.resolve_dims(rho, dims)
    full_rank = _support_basis(r)[0].shape[1] == r.shape[0]

    cands = list(extra_candidates) + family_candidates(r, dims)
    uppers = []
    for dec in cands:
        v = d_omega(r, dec.matrix()).value
        uppers.append((v, dec))
    best_up = min(uppers, key=lambda t: t[0]) if uppers else (np.inf, None)

    lower, lower_cert = 0.0, "nonnegativity"
    s_ppt = None
    if opt.use_witness:
        wv, ops = witness_lower(r, dims, gap_tol=opt.gap_tol)
        if wv == np.inf:
            raise InfiniteValue("decomposable witness dual is unbounded")
        if wv > lower:
            lower, lower_cert = wv, ("witness", ops)
    if opt.use_bisection and best_up[0] > lower + opt.bisect_tol:
        # the witness value is usually tight: probe just above it first
        probe = lower + opt.bisect_tol / 2
        prog, s_expr = ppt_margin_program(r, dims, 2.0**probe)
        sol = solve(prog, gap_tol=opt.gap_tol)
        if is_feasible(sol):
            s_ppt = mc.hermitize(s_expr.value(sol.x))
        else:
            hi = d_omega(r, np.eye(r.shape[0])).value if full_rank else best_up[0]
            if not np.isfinite(hi):
                hi = 64.0
                prog, _ = ppt_margin_program(r, dims, 2.0**hi)
                if not is_feasible(solve(prog, gap_tol=opt.gap_tol)):
                    raise InfiniteValue("no PPT operator shares the support of rho")
            hi = max(hi, probe + opt.bisect_tol) * (1 + 1e-9) + 1e-9
            br = ppt_bisection(r, dims, hi, lo=probe, tol=opt.bisect_tol, gap_tol=opt.gap_tol)
            if br.lower > lower:
                lower, lower_cert = br.lower, ("ppt-bisection", br.lower_certificate)
            s_ppt = br.upper_certificate
    lower = max(lower, 0.0)

    target = lower + max(opt.bisect_tol, 1e-9)
    if best_up[0] > target and s_ppt is not None and dims[0] * dims[1] <= 6:
        cand = _ppt_candidate(s_ppt, r, dims)
        if cand is not None:
            v = d_omega(r, cand.matrix()).value
            if v < best_up[0]:
                best_up = (v, cand)
    if s_ppt is not None and dims == (2, 2) and full_rank and isinstance(best_up[1], PPTOperator):
        # prefer an explicit product decomposition when it is as good
        dec = _spin_flip_candidate(best_up[1].matrix(), r)
        if dec is not None:
            v = d_omega(r, dec.matrix()).value
            if v <= best_up[0] + 1e-9:
                best_up = (v, dec)
    if best_up[0] > target and full_rank and opt.column_rounds > 0:
        seeds = [best_up[1]] if best_up[1] is not None else []
        v, dec = column_generation(r, dims, seeds, rng, rounds=opt.column_rounds, target=target,
                                   gap_tol=opt.gap_tol)
        if dec is not None and v < best_up[0]:
            best_up = (v, dec)
    upper, dec = best_up
    if not np.isfinite(upper) and not np.isfinite(lower):
        raise InfiniteValue("no separable operator shares the support of rho")
    lower = min(lower, upper)
    return Bracket(lower, upper, lower_cert, dec)


# --- symmetric families -------------------------------------------------


def werner_family(rho, dims=None) -> WernerPoint:
    """Werner parameter of the U (x) U twirl of ``rho``: ``p = (1 + tr(F rho)) / 2``."""
    r = mc.as_array(rho)
    da, db = mc.resolve_dims(rho, dims)
    if da != db:
        raise InvalidOperator("Werner family needs equal local dimensions")
    f = np.real(np.trace(mc.swap_operator(da) @ r)) / np.real(np.trace(r))
    return WernerPoint(float(np.clip((1 + f) / 2, 0.0, 1.0)), da)


def isotropic_family(rho, dims=None) -> float:
    """Overlap ``tr(Psi rho) / tr(rho)`` with the maximally entangled state."""
    r = mc.as_array(rho)
    da, db = mc.resolve_dims(rho, dims)
    if da != db:
        raise InvalidOperator("isotropic family needs equal local dimensions")
    return float(np.real(np.trace(mc.max_entangled(da) @ r)) / np.real(np.trace(r)))


def werner_domega_sep(p: float, d: int):
    """Closed form ``max(0, log2((1-p)/p))`` with the witness pair ``(P_as/p, P_s/p)``."""
    if not (0.0 <= p <= 1.0):
        raise InvalidOperator(f"p={p} outside [0, 1]")
    if p == 0:
        return np.inf, None
    a = mc.antisym_projector(d) / p
    b = mc.sym_projector(d) / p
    if p >= 0.5:
        return 0.0, (a, b)
    return float(np.log2((1 - p) / p)), (a, b)


def werner_witness_tensor(p: float, d: int, n: int):
    """n-fold witness ``(A^{(x)n}, B^{(x)n})`` grouped as (A1..An)(B1..Bn)."""
    if n < 1 or n > MAX_WITNESS_COPIES:
        raise SizeGuard(f"witness tensor limited to n <= {MAX_WITNESS_COPIES}, got {n}")
    if not (0.0 < p <= 1.0):
        raise InvalidOperator(f"p={p} outside (0, 1]")
    a = mc.antisym_projector(d) / p
    b = mc.sym_projector(d) / p
    an, _ = mc.tensor_power(a, n, (d, d))
    bn, _ = mc.tensor_power(b, n, (d, d))
    return an, bn


def witness_min_eig(A, B, dims) -> float:
    """Smallest eigenvalue of ``(B - A)^{T_B}``; nonnegative means a PPT-valid witness."""
    return float(np.linalg.eigvalsh(mc.hermitize(mc.partial_transpose(B - A, dims)))[0])


def witness_valid(A, B, dims, tol: float = PPT_TOL) -> bool:
    return witness_min_eig(A, B, dims) >= -tol


# --- membership in the separable cone ------------------------------------


def sep_membership(x, dims=None):
    """Verdict on whether ``x`` (normalized) is separable.

    Returns ``(verdict, evidence)`` with verdict in {"yes", "no", "unknown"}.
    """
    a = mc.hermitize(mc.as_array(x))
    dims = mc.resolve_dims(x, dims)
    if np.max(np.abs(a), initial=0.0) == 0.0:
        return "yes", "zero operator"
    w = np.linalg.eigvalsh(a)
    if w[0] < -mc.PSD_TOL * max(1.0, w[-1]):
        return "no", f"not positive (min eigenvalue {w[0]:.3e})"
    mineig = ppt_min_eig(a, dims)
    if mineig < -PPT_TOL:
        return "no", f"partial transpose has eigenvalue {mineig:.3e}"
    if dims[0] * dims[1] <= 6:
        return "yes", f"PPT at {dims[0]}x{dims[1]} (min eigenvalue {mineig:.3e})"
    for fn in (product_operator_decomposition, diagonal_decomposition):
        dec = fn(a, dims)
        if dec is not None:
            return "yes", dec
    try:
        br = d_omega_sep(a, dims, options=SepSearchOptions(use_bisection=False, use_witness=False))
    except InfiniteValue:
        return "unknown", "no separable operator with matching support found"
    if br.upper <= 1e-9:
        return "yes", br.upper_certificate
    return "unknown", f"PPT, best separable distance {br.upper:.3e}"


def ratio_of(M, N, a, b) -> float:
    v = np.kron(a, b)
    num = np.real(v.conj() @ M @ v)
    den = np.real(v.conj() @ N @ v)
    return num / den if den > 0 else (np.inf if num > 0 else 0.0)


__all__ = [
    "WernerPoint",
    "SeparableDecomposition",
    "is_ppt",
    "ppt_min_eig",
    "sep_sup_ratio",
    "ratio_ascent",
    "d_omega_sep",
    "werner_family",
    "isotropic_family",
    "werner_domega_sep",
    "werner_witness_tensor",
    "witness_valid",
    "witness_value",
    "sep_membership",
    "max_ratio",
    "same_support",
]
