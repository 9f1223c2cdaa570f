"""Dense conic programming over PSD and nonnegative cones.

Programs are stated in inequality ("LMI") form. A vector ``x`` of real
scalars is constrained by equalities ``A x = b`` and by cone blocks, each an
affine function ``F0 + sum_i x_i F_i`` that must lie in a PSD cone (real
symmetric or complex Hermitian) or in a nonnegative orthant. Complex blocks
are lowered to real ones with ``real_embed``.

``Model`` is a small builder for such programs. ``solve`` runs a
homogeneous self-dual primal-dual interior point method with Nesterov-Todd
scaling and Mehrotra correction. An external solver can be plugged in through
``backend``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .bracket import Bracket
from .errors import BracketInvalid, NumericalBreakdown
from .matcore import real_embed, real_unembed

DEFAULT_GAP_TOL = 1e-7
RAY_TOL = 1e-7
DEFAULT_BISECT_TOL = 1e-6
MAX_ITERS = 120
FEAS_TOL = 1e-9
log = logging.getLogger(__name__)


# --- affine expressions -------------------------------------------------


class Affine:
    """Affine function of the model variables.

    ``const`` has the shape of the value (``()`` for scalars, ``(k, k)`` for
    matrices); ``coef[j]`` is the coefficient of variable ``idx[j]``.
    """

    __array_priority__ = 100

    def __init__(self, const, idx=None, coef=None):
        self.const = np.asarray(const, dtype=complex)
        shape = self.const.shape
        if idx is None:
            idx = np.zeros(0, dtype=int)
            coef = np.zeros((0,) + shape, dtype=complex)
        self.idx = np.asarray(idx, dtype=int)
        self.coef = np.asarray(coef, dtype=complex).reshape((len(self.idx),) + shape)

    @property
    def shape(self):
        return self.const.shape

    @staticmethod
    def lift(other, shape) -> "Affine":
        if isinstance(other, Affine):
            return other
        arr = np.asarray(other, dtype=complex)
        if arr.shape != shape:
            arr = np.broadcast_to(arr, shape)
        return Affine(arr)

    def __add__(self, other):
        o = Affine.lift(other, self.shape)
        return Affine(
            self.const + o.const,
            np.concatenate([self.idx, o.idx]),
            np.concatenate([self.coef, o.coef]),
        )

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, self.idx, -self.coef)

    def __sub__(self, other):
        return self + (-Affine.lift(other, self.shape))

    def __rsub__(self, other):
        return Affine.lift(other, self.shape) - self

    def __mul__(self, k):
        if isinstance(k, Affine):
            raise TypeError("product of two affine expressions is not affine")
        k = complex(k)
        return Affine(self.const * k, self.idx, self.coef * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / k)

    def times(self, mat) -> "Affine":
        """Scalar expression times a constant matrix."""
        if self.shape != ():
            raise ValueError("times() needs a scalar expression")
        mat = np.asarray(mat, dtype=complex)
        return Affine(self.const * mat, self.idx, self.coef[:, None, None] * mat)

    def apply(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Affine":
        """Apply a linear map to the matrix value."""
        const = np.asarray(fn(self.const), dtype=complex)
        if len(self.idx):
            coef = np.stack([fn(c) for c in self.coef])
        else:
            coef = np.zeros((0,) + const.shape, dtype=complex)
        return Affine(const, self.idx, coef)

    def trace_with(self, mat) -> "Affine":
        """Real scalar ``Re tr(mat @ value)``."""
        mat = np.asarray(mat, dtype=complex)
        const = np.real(np.sum(mat.T * self.const))
        coef = np.real(np.einsum("ij,mji->m", mat, self.coef))
        return Affine(const, self.idx, coef)

    def trace(self) -> "Affine":
        return Affine(
            np.real(np.trace(self.const)),
            self.idx,
            np.real(np.einsum("mii->m", self.coef)),
        )

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.const.copy()
        if len(self.idx):
            out = out + np.tensordot(x[self.idx], self.coef, axes=1)
        return out

    def merged(self, n: int):
        """Coefficients with duplicate variables summed."""
        uniq, inv = np.unique(self.idx, return_inverse=True)
        coef = np.zeros((len(uniq),) + self.shape, dtype=complex)
        np.add.at(coef, inv, self.coef)
        return uniq, coef


def sum_expr(terms) -> Affine:
    terms = list(terms)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


@dataclass
class Cone:
    """One cone block, ``s = h - G x`` must lie in the cone.

    For PSD blocks ``G`` has shape ``(m, k, k)`` and ``h`` shape ``(k, k)``;
    for nonnegative blocks ``(m, k)`` and ``(k,)``. ``idx`` lists the
    variables with a nonzero column. ``embedded`` records whether the block
    is the real embedding of a complex one.
    """

    kind: str
    idx: np.ndarray
    G: np.ndarray
    h: np.ndarray
    embedded: bool = False

    @property
    def size(self) -> int:
        return self.h.shape[0]

    def apply_G(self, x):
        if self.kind == "psd":
            return np.tensordot(x[self.idx], self.G, axes=1)
        return x[self.idx] @ self.G

    def apply_GT(self, z, n):
        out = np.zeros(n)
        if self.kind == "psd":
            out[self.idx] = np.tensordot(self.G, z, axes=([1, 2], [0, 1]))
        else:
            out[self.idx] = self.G @ z
        return out


@dataclass
class ConicProgram:
    """``max`` or ``min`` of ``objective @ x + offset`` subject to cones and equalities."""

    objective: np.ndarray
    cones: list
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    maximize: bool = False
    offset: float = 0.0
    labels: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.objective)

    def to_json(self) -> str:
        blocks = []
        for c in self.cones:
            blocks.append(
                {
                    "kind": c.kind,
                    "size": c.size,
                    "vars": c.idx.tolist(),
                    "G": c.G.tolist(),
                    "h": c.h.tolist(),
                }
            )
        eqs = [
            {"row": row.tolist(), "rhs": float(r)}
            for row, r in zip(self.eq_matrix, self.eq_rhs)
        ]
        obj = {
            "c": self.objective.tolist(),
            "offset": self.offset,
            "sense": "max" if self.maximize else "min",
        }
        return json.dumps({"blocks": blocks, "equalities": eqs, "objective": obj})


@dataclass
class ConicSolution:
    status: str
    primal_value: float
    dual_value: float
    x: np.ndarray
    primal_blocks: list
    dual_blocks: list
    duality_gap: float
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class Model:
    """Builder for ``ConicProgram``."""

    def __init__(self):
        self.n = 0
        self._psd = []
        self._nonneg = []
        self._eqs = []
        self._objective = None
        self._maximize = False

    def scalar(self) -> Affine:
        i = self.n
        self.n += 1
        return Affine(0.0, [i], [1.0])

    def scalars(self, k: int) -> list[Affine]:
        return [self.scalar() for _ in range(k)]

    def hermitian(self, d: int, real: bool = False) -> Affine:
        """Hermitian ``d x d`` matrix variable (real symmetric if ``real``)."""
        basis = []
        for i in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, i] = 1.0
            basis.append(e)
        for i in range(d):
            for j in range(i + 1, d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = e[j, i] = 1.0
                basis.append(e)
                if not real:
                    e = np.zeros((d, d), dtype=complex)
                    e[i, j], e[j, i] = 1j, -1j
                    basis.append(e)
        idx = np.arange(self.n, self.n + len(basis))
        self.n += len(basis)
        return Affine(np.zeros((d, d)), idx, np.stack(basis))

    def psd(self, expr: Affine):
        self._psd.append(expr)

    def nonneg(self, expr: Affine):
        self._nonneg.append(expr)

    def equal(self, expr: Affine, rhs: float = 0.0):
        self._eqs.append((expr, float(rhs)))

    def maximize(self, expr: Affine):
        self._objective, self._maximize = expr, True

    def minimize(self, expr: Affine):
        self._objective, self._maximize = expr, False

    def build(self) -> ConicProgram:
        n = self.n
        cones = []
        scalars = [e for e in self._nonneg if e.shape == ()]
        vectors = [e for e in self._nonneg if e.shape != ()]
        if scalars:
            h = np.array([np.real(e.const) for e in scalars])
            Gd = np.zeros((n, len(scalars)))
            for k, e in enumerate(scalars):
                idx, coef = e.merged(n)
                Gd[idx, k] -= np.real(coef)
            used = np.flatnonzero(np.any(Gd != 0, axis=1))
            cones.append(Cone("nonneg", used, Gd[used], h))
        for e in vectors:
            idx, coef = e.merged(n)
            cones.append(Cone("nonneg", idx, -np.real(coef), np.real(e.const)))
        for e in self._psd:
            idx, coef = e.merged(n)
            keep = np.any(np.abs(coef) > 0, axis=(1, 2))
            idx, coef = idx[keep], coef[keep]
            is_real = np.max(np.abs(e.const.imag), initial=0.0) == 0.0 and (
                np.max(np.abs(coef.imag), initial=0.0) == 0.0
            )
            if is_real:
                G = -np.real(coef)
                h = np.real(e.const)
            else:
                G = -np.stack([real_embed(c) for c in coef]) if len(coef) else np.zeros(
                    (0, 2 * e.shape[0], 2 * e.shape[0])
                )
                h = real_embed(e.const)
            h = (h + h.T) / 2
            G = (G + G.transpose(0, 2, 1)) / 2
            cones.append(Cone("psd", idx, G, h, embedded=not is_real))
        A = np.zeros((len(self._eqs), n))
        b = np.zeros(len(self._eqs))
        for r, (e, rhs) in enumerate(self._eqs):
            idx, coef = e.merged(n)
            np.add.at(A[r], idx, np.real(coef))
            b[r] = rhs - float(np.real(e.const))
        c = np.zeros(n)
        offset = 0.0
        if self._objective is not None:
            idx, coef = self._objective.merged(n)
            np.add.at(c, idx, np.real(coef))
            offset = float(np.real(self._objective.const))
        return ConicProgram(c, cones, A, b, self._maximize, offset)


# --- interior point method ----------------------------------------------


def _inner(a, b) -> float:
    return float(sum(np.sum(u * v) for u, v in zip(a, b)))


def _norm(blocks) -> float:
    return float(np.sqrt(sum(np.sum(u * u) for u in blocks)))


def _identity(cones):
    return [np.eye(c.size) if c.kind == "psd" else np.ones(c.size) for c in cones]


def _sym(a):
    return (a + a.T) / 2


class _Scaling:
    """Nesterov-Todd scaling for all blocks."""

    def __init__(self, cones, s, z):
        self.cones = cones
        self.R, self.Rinv, self.w, self.lam = [], [], [], []
        for c, sb, zb in zip(cones, s, z):
            if c.kind == "psd":
                ls = _factor(sb)
                lz = _factor(zb)
                u, lam, vt = np.linalg.svd(lz.T @ ls)
                lam = np.maximum(lam, 1e-300)
                r = ls @ vt.T / np.sqrt(lam)
                rinv = (u.T @ lz.T) / np.sqrt(lam)[:, None]
                self.R.append(r)
                self.Rinv.append(rinv)
                self.w.append(None)
                self.lam.append(lam)
            else:
                w = np.sqrt(sb / zb)
                self.R.append(None)
                self.Rinv.append(None)
                self.w.append(w)
                self.lam.append(np.sqrt(sb * zb))

    def s_blocks(self):
        out = []
        for c, r, w, l in zip(self.cones, self.R, self.w, self.lam):
            out.append(_sym((r * l) @ r.T) if c.kind == "psd" else w * l)
        return out

    def z_blocks(self):
        out = []
        for c, ri, w, l in zip(self.cones, self.Rinv, self.w, self.lam):
            out.append(_sym((ri.T * l) @ ri) if c.kind == "psd" else l / w)
        return out

    def update(self, dss, dzs, alpha):
        """Move to ``lam + alpha d`` in the scaled space and rescale.

        The new scaling is composed onto the old one, so the iterates are
        never formed explicitly and their grading is preserved.
        """
        for k, c in enumerate(self.cones):
            l = self.lam[k]
            if c.kind == "psd":
                q = 1 / np.sqrt(l)
                ms = np.eye(len(l)) + alpha * _sym(q[:, None] * dss[k] * q[None, :])
                mz = np.eye(len(l)) + alpha * _sym(q[:, None] * dzs[k] * q[None, :])
                ls = np.sqrt(l)[:, None] * _factor(ms)
                lz = np.sqrt(l)[:, None] * _factor(mz)
                u, lam, vt = np.linalg.svd(lz.T @ ls)
                lam = np.maximum(lam, 1e-300)
                self.R[k] = self.R[k] @ (ls @ vt.T / np.sqrt(lam))
                self.Rinv[k] = ((u.T @ lz.T) / np.sqrt(lam)[:, None]) @ self.Rinv[k]
                self.lam[k] = lam
            else:
                st = l + alpha * dss[k]
                zt = l + alpha * dzs[k]
                self.w[k] = self.w[k] * np.sqrt(st / zt)
                self.lam[k] = np.sqrt(st * zt)

    # W z
    def scale_z(self, z):
        out = []
        for c, r, w, zb in zip(self.cones, self.R, self.w, z):
            out.append(r.T @ zb @ r if c.kind == "psd" else w * zb)
        return out

    # W^{-T} s
    def scale_s(self, s):
        out = []
        for c, ri, w, sb in zip(self.cones, self.Rinv, self.w, s):
            out.append(ri @ sb @ ri.T if c.kind == "psd" else sb / w)
        return out

    # W^T u
    def unscale_s(self, u):
        out = []
        for c, r, w, ub in zip(self.cones, self.R, self.w, u):
            out.append(_sym(r @ ub @ r.T) if c.kind == "psd" else w * ub)
        return out

    # W^{-1} u
    def unscale_z(self, u):
        out = []
        for c, ri, w, ub in zip(self.cones, self.Rinv, self.w, u):
            out.append(_sym(ri.T @ ub @ ri) if c.kind == "psd" else ub / w)
        return out

    # (W^T W)^{-1} u
    def winv2(self, u):
        return self.unscale_z(self.scale_s(u))

    def lam_blocks(self):
        return [np.diag(l) if c.kind == "psd" else l for c, l in zip(self.cones, self.lam)]

    def lam_solve(self, r):
        """Solve ``lam o X = r`` in the scaled space."""
        out = []
        for c, l, rb in zip(self.cones, self.lam, r):
            if c.kind == "psd":
                out.append(2 * rb / (l[:, None] + l[None, :]))
            else:
                out.append(rb / l)
        return out

    def max_step(self, ds, dz):
        """Largest step keeping ``lam + a ds`` and ``lam + a dz`` in the cone."""
        amax = np.inf
        for c, l, a, b in zip(self.cones, self.lam, ds, dz):
            for d in (a, b):
                if c.kind == "psd":
                    q = 1 / np.sqrt(l)
                    m = np.linalg.eigvalsh(_sym(q[:, None] * d * q[None, :]))[0]
                else:
                    m = np.min(d / l) if len(l) else 0.0
                if m < 0:
                    amax = min(amax, -1 / m)
        return amax


def _factor(a):
    a = _sym(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(a)
        return v * np.sqrt(np.maximum(w, 1e-300))


def _jordan(cones, a, b):
    out = []
    for c, x, y in zip(cones, a, b):
        out.append(_sym(x @ y) if c.kind == "psd" else x * y)
    return out


class _KKT:
    """Factorization of the reduced Newton system for one scaling."""

    def __init__(self, prog: ConicProgram, scal: _Scaling, reg: float = 0.0):
        n, p = prog.n, len(prog.eq_rhs)
        H = np.zeros((n, n))
        for c, ri, w in zip(prog.cones, scal.Rinv, scal.w):
            if len(c.idx) == 0:
                continue
            if c.kind == "psd":
                t = ri @ c.G @ ri.T
                t = t.reshape(len(c.idx), -1)
                H[np.ix_(c.idx, c.idx)] += t @ t.T
            else:
                g = c.G / w
                H[np.ix_(c.idx, c.idx)] += g @ g.T
        self.prog, self.scal = prog, scal
        self.n, self.p = n, p
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H
        K[:n, n:] = prog.eq_matrix.T
        K[n:, :n] = prog.eq_matrix
        if reg:
            K[:n, :n] += reg * np.eye(n)
            K[n:, n:] -= reg * np.eye(p)
        if not np.all(np.isfinite(K)):
            raise NumericalBreakdown("non-finite Newton system")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            try:
                self.lu = sla.lu_factor(K, check_finite=False)
            except (ValueError, sla.LinAlgError) as exc:  # pragma: no cover
                raise NumericalBreakdown(str(exc)) from exc
        piv = np.abs(np.diag(self.lu[0]))
        if not np.all(np.isfinite(piv)) or piv.min() == 0.0:
            raise NumericalBreakdown("singular Newton system")
        self.scale = float(np.max(np.abs(np.diag(H)), initial=1.0))

    def solve(self, r1, r2, r3, refine: int = 2):
        dx, dy, dz = self._solve(r1, r2, r3)
        prog, scal = self.prog, self.scal
        for _ in range(refine):
            gdx = [c.apply_G(dx) for c in prog.cones]
            wwdz = scal.unscale_s(scal.scale_z(dz))
            e1 = r1 - prog.eq_matrix.T @ dy - _GT(prog, dz)
            e2 = r2 - prog.eq_matrix @ dx
            e3 = [r - (g - q) for r, g, q in zip(r3, gdx, wwdz)]
            cx, cy, cz = self._solve(e1, e2, e3)
            dx, dy = dx + cx, dy + cy
            dz = [u + v for u, v in zip(dz, cz)]
        return dx, dy, dz

    def _solve(self, r1, r2, r3):
        prog, scal = self.prog, self.scal
        w3 = scal.winv2(r3)
        rhs1 = r1 + sum(c.apply_GT(b, self.n) for c, b in zip(prog.cones, w3))
        sol = sla.lu_solve(self.lu, np.concatenate([rhs1, r2]), check_finite=False)
        dx, dy = sol[: self.n], sol[self.n :]
        gdx = [c.apply_G(dx) for c in prog.cones]
        dz = scal.winv2([g - r for g, r in zip(gdx, r3)])
        return dx, dy, dz


def _G(prog, x):
    return [c.apply_G(x) for c in prog.cones]


def _GT(prog, z):
    out = np.zeros(prog.n)
    for c, zb in zip(prog.cones, z):
        out += c.apply_GT(zb, prog.n)
    return out


def _shift_into_cone(cones, u):
    worst = -np.inf
    for c, b in zip(cones, u):
        if c.size == 0:
            continue
        m = np.linalg.eigvalsh(b)[0] if c.kind == "psd" else np.min(b)
        worst = max(worst, -m)
    if worst >= -1e-8:
        e = _identity(cones)
        return [b + (1 + max(worst, 0.0)) * eb for b, eb in zip(u, e)]
    return u


def _ipm(prog: ConicProgram, gap_tol: float, max_iters: int) -> ConicSolution:
    cones = prog.cones
    n = prog.n
    A, b = prog.eq_matrix, prog.eq_rhs
    c = -prog.objective if prog.maximize else prog.objective.copy()
    h = [cn.h for cn in cones]
    deg = sum(cn.size for cn in cones)
    feastol = FEAS_TOL

    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, _norm(h))

    if deg == 0:
        raise NumericalBreakdown("program has no cone constraints")

    ones = _identity(cones)
    scal = _Scaling(cones, ones, ones)
    try:
        kkt = _KKT(prog, scal)
        x, _, zz = kkt.solve(np.zeros(n), b, h)
        s = [-u for u in zz]
        _, y, z = kkt.solve(-c, np.zeros(len(b)), [np.zeros_like(u) for u in h])
    except NumericalBreakdown:
        kkt = _KKT(prog, scal, reg=1e-10)
        x, _, zz = kkt.solve(np.zeros(n), b, h)
        s = [-u for u in zz]
        _, y, z = kkt.solve(-c, np.zeros(len(b)), [np.zeros_like(u) for u in h])
    s = _shift_into_cone(cones, s)
    z = _shift_into_cone(cones, z)
    tau, kappa = 1.0, 1.0

    status = "max_iters"
    it = 0
    scal = _Scaling(cones, s, z)
    best = (np.inf,)
    for it in range(max_iters + 1):
        s, z = scal.s_blocks(), scal.z_blocks()
        gx = _G(prog, x)
        rx = A.T @ y + _GT(prog, z) + c * tau
        ry = b * tau - A @ x
        rz = [hb * tau - g - sb for hb, g, sb in zip(h, gx, s)]
        cx, by, hz = float(c @ x), float(b @ y), _inner(h, z)
        rt = -cx - by - hz - kappa
        sz = _inner(s, z)
        mu = (sz + tau * kappa) / (deg + 1)

        pcost, dcost = cx / tau, -(by + hz) / tau
        aty, gtz = A.T @ y, _GT(prog, z)
        pres = max(
            np.linalg.norm(ry) / (tau * resy0 + np.linalg.norm(A @ x)),
            _norm(rz) / (tau * resz0 + _norm(gx)),
        )
        dres = np.linalg.norm(rx) / (tau * resx0 + np.linalg.norm(aty) + np.linalg.norm(gtz))
        gap_ok = abs(pcost - dcost) <= gap_tol * (1 + abs(pcost))
        merit = max(pres, dres, abs(pcost - dcost) / (1 + abs(pcost)))
        if merit < best[0]:
            best = (merit, x.copy(), y.copy(), s, z, tau, pres, dres, gap_ok)
        elif best[0] < 1e-6 and merit > 100 * best[0]:
            # progress has stalled at the precision floor
            status = _best_status(best, feastol)
            _, x, y, s, z, tau = best[:6]
            break
        log.debug("%3d p=%+.9e d=%+.9e pres=%.1e dres=%.1e sz=%.1e tau=%.2e k=%.2e",
                  it, pcost, dcost, pres, dres, sz, tau, kappa)
        if pres <= feastol and dres <= feastol and gap_ok:
            status = "optimal"
            break
        if by + hz < 0:
            pinf = np.linalg.norm(A.T @ y + _GT(prog, z)) / resx0 / -(by + hz)
            if pinf <= RAY_TOL:
                status = "infeasible"
                break
        if cx < 0:
            dinf = max(
                np.linalg.norm(A @ x) / resy0,
                _norm([g + sb for g, sb in zip(gx, s)]) / resz0,
            ) / -cx
            if dinf <= RAY_TOL:
                status = "unbounded"
                break
        if it == max_iters:
            if best[0] < merit:
                _, x, y, s, z, tau = best[:6]
            break

        try:
            kkt = _KKT(prog, scal)
        except (NumericalBreakdown, np.linalg.LinAlgError, ValueError):
            try:
                diag_h = max(np.max(np.abs(prog.eq_matrix), initial=1.0), 1.0)
                kkt = _KKT(prog, scal, reg=1e-12 * diag_h)
            except NumericalBreakdown:
                if len(best) > 1:
                    status = _best_status(best, feastol)
                    _, x, y, s, z, tau = best[:6]
                    break
                raise
        lam = scal.lam_blocks()
        lamsq = _jordan(cones, lam, lam)
        x1, y1, z1 = kkt.solve(-c, b, h)
        wz1 = scal.scale_z(z1)
        denom = _inner(wz1, wz1) + kappa / tau

        def direction(sigma, corr_s=None, corr_z=None, corr_tk=0.0):
            rc = [sigma * mu * e - l2 for e, l2 in zip(ones, lamsq)]
            if corr_s is not None:
                rc = [r - q for r, q in zip(rc, _jordan(cones, corr_s, corr_z))]
            r6 = sigma * mu - tau * kappa - corr_tk
            ls = scal.lam_solve(rc)
            wls = scal.unscale_s(ls)
            f = 1 - sigma
            x0, y0, z0 = kkt.solve(-f * rx, f * ry, [f * r - q for r, q in zip(rz, wls)])
            num = -f * rt + (c @ x0 + b @ y0 + _inner(h, z0)) + r6 / tau
            dtau = num / denom
            dx = x0 + dtau * x1
            dy = y0 + dtau * y1
            dz = [u + dtau * v for u, v in zip(z0, z1)]
            dkappa = (r6 - kappa * dtau) / tau
            dzs = scal.scale_z(dz)
            dss = [u - v for u, v in zip(ls, dzs)]
            return dx, dy, dz, dtau, dkappa, dss, dzs

        def step_len(dss, dzs, dtau, dkappa):
            a = scal.max_step(dss, dzs)
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        dx, dy, dz, dtau, dkappa, dss, dzs = direction(0.0)
        finite = np.all(np.isfinite(dx)) and np.isfinite(dtau)
        if finite:
            a_aff = min(1.0, step_len(dss, dzs, dtau, dkappa))
            sigma = (1 - a_aff) ** 3
            dx, dy, dz, dtau, dkappa, dss, dzs = direction(sigma, dss, dzs, dtau * dkappa)
            finite = np.all(np.isfinite(dx)) and np.isfinite(dtau)
        if not finite:
            if len(best) > 1:
                status = _best_status(best, feastol)
                _, x, y, s, z, tau = best[:6]
                break
            raise NumericalBreakdown("non-finite search direction")
        alpha = min(1.0, 0.99 * step_len(dss, dzs, dtau, dkappa))

        x = x + alpha * dx
        y = y + alpha * dy
        scal.update(dss, dzs, alpha)
        tau += alpha * dtau
        kappa += alpha * dkappa
        if tau <= 0 or not np.isfinite(tau):
            raise NumericalBreakdown("homogenizing variable left the cone")

    return _finish(prog, status, x, y, s, z, tau, it)


def _best_status(best, feastol) -> str:
    """Status of the best iterate when the iteration cannot continue."""
    _, _, _, _, _, _, pres, dres, gap_ok = best
    loose = 100 * feastol
    return "optimal" if pres <= loose and dres <= loose and gap_ok else "max_iters"


def _finish(prog, status, x, y, s, z, tau, it) -> ConicSolution:
    sign = -1.0 if prog.maximize else 1.0
    c = sign * prog.objective
    if status in ("optimal", "max_iters"):
        xs, ys = x / tau, y / tau
        ss = [u / tau for u in s]
        zs = [u / tau for u in z]
        pcost = float(c @ xs)
        dcost = -float(prog.eq_rhs @ ys) - _inner([cn.h for cn in prog.cones], zs)
        primal = sign * pcost + prog.offset
        dual = sign * dcost + prog.offset
        return ConicSolution(
            status,
            primal,
            dual,
            xs,
            [_unembed(cn, u) for cn, u in zip(prog.cones, ss)],
            [_unembed(cn, u, dual=True) for cn, u in zip(prog.cones, zs)],
            abs(primal - dual),
            it,
        )
    if status == "infeasible":
        val = -np.inf if prog.maximize else np.inf
    else:
        val = np.inf if prog.maximize else -np.inf
    return ConicSolution(status, val, val, x, [], [u for u in z], np.nan, it)


def _unembed(cone, u, dual=False):
    if cone.kind == "psd" and cone.embedded:
        out = real_unembed(u)
        return 2 * out if dual else out
    return u


def _cvxopt_backend(prog: ConicProgram, gap_tol: float, max_iters: int) -> ConicSolution:
    import cvxopt
    from cvxopt import solvers

    c = -prog.objective if prog.maximize else prog.objective
    lin = [cn for cn in prog.cones if cn.kind == "nonneg"]
    psd = [cn for cn in prog.cones if cn.kind == "psd"]
    n = prog.n
    rows, hs = [], []
    for cn in lin:
        g = np.zeros((cn.size, n))
        g[:, cn.idx] = cn.G.T
        rows.append(g)
        hs.append(cn.h)
    for cn in psd:
        k = cn.size
        g = np.zeros((k * k, n))
        g[:, cn.idx] = cn.G.transpose(0, 2, 1).reshape(len(cn.idx), k * k).T
        rows.append(g)
        hs.append(cn.h.T.reshape(-1))
    G = cvxopt.matrix(np.vstack(rows))
    h = cvxopt.matrix(np.concatenate(hs))
    dims = {"l": sum(cn.size for cn in lin), "q": [], "s": [cn.size for cn in psd]}
    kw = {}
    if len(prog.eq_rhs):
        kw = {"A": cvxopt.matrix(prog.eq_matrix), "b": cvxopt.matrix(prog.eq_rhs)}
    opts = {"show_progress": False, "abstol": gap_tol * 1e-2, "reltol": gap_tol, "feastol": 1e-9,
            "maxiters": max_iters}
    try:
        res = solvers.conelp(cvxopt.matrix(c), G, h, dims, options=opts, **kw)
    except (ArithmeticError, ValueError) as exc:
        raise NumericalBreakdown(f"cvxopt failed: {exc}") from exc
    st = {"optimal": "optimal", "primal infeasible": "infeasible", "dual infeasible": "unbounded"}.get(
        res["status"], "max_iters"
    )
    if st in ("infeasible", "unbounded"):
        sign = 1 if prog.maximize else -1
        val = (-np.inf if st == "infeasible" else np.inf) * sign
        return ConicSolution(st, val, val, np.zeros(n), [], [], np.nan, res["iterations"])
    x = np.array(res["x"]).ravel()
    sv = np.array(res["s"]).ravel()
    zv = np.array(res["z"]).ravel()
    sblocks, zblocks = [], []
    off = 0
    order = lin + psd
    for cn in order:
        k = cn.size
        m = k if cn.kind == "nonneg" else k * k
        a, bz = sv[off : off + m], zv[off : off + m]
        if cn.kind == "psd":
            a, bz = _sym(a.reshape(k, k).T), _sym(bz.reshape(k, k).T)
        sblocks.append(a)
        zblocks.append(bz)
        off += m
    pos = {id(cn): i for i, cn in enumerate(order)}
    sblocks = [sblocks[pos[id(cn)]] for cn in prog.cones]
    zblocks = [zblocks[pos[id(cn)]] for cn in prog.cones]
    y = np.array(res["y"]).ravel() if len(prog.eq_rhs) else np.zeros(0)
    return _finish(prog, st, x, y, sblocks, zblocks, 1.0, res["iterations"])


BACKENDS = {"builtin": _ipm, "cvxopt": _cvxopt_backend}


def solve(
    prog: ConicProgram,
    gap_tol: float = DEFAULT_GAP_TOL,
    max_iters: int = MAX_ITERS,
    backend: str | Callable | None = None,
) -> ConicSolution:
    """Solve a conic program.

    ``gap_tol`` bounds ``|primal - dual| <= gap_tol * (1 + |primal|)`` at an
    optimal return. ``backend`` selects the built-in method (default), the
    ``"cvxopt"`` adapter, or any callable with the same signature as the
    built-in one.
    """
    if not (1e-10 <= gap_tol <= 1e-4):
        raise ValueError(f"gap_tol {gap_tol} outside [1e-10, 1e-4]")
    fn = BACKENDS[backend or "builtin"] if not callable(backend) else backend
    with np.errstate(all="ignore"):
        return fn(prog, gap_tol, max_iters)


# --- bisection ----------------------------------------------------------


FEASIBILITY_TOL = 1e-9


def is_feasible(sol: ConicSolution, tol: float = FEASIBILITY_TOL) -> bool:
    """Verdict for a margin program.

    Feasibility problems are posed as ``maximize t`` where ``t`` is a slack
    added to every constraint; the original problem is feasible exactly when
    the optimal margin is nonnegative.
    """
    if sol.status == "infeasible":
        return False
    if sol.status == "unbounded":
        return True
    return sol.primal_value >= -tol


def bisect_feasible(
    builder: Callable[[float], ConicProgram],
    lo: float,
    hi: float,
    tol: float = DEFAULT_BISECT_TOL,
    gap_tol: float = 1e-9,
    backend=None,
    feas_tol: float = FEASIBILITY_TOL,
) -> Bracket:
    """Locate the threshold of a monotone family of feasibility problems.

    ``builder(t)`` must be infeasible below the threshold and feasible above.
    Returns a bracket of width at most ``tol``: ``lower`` is the largest
    parameter shown infeasible and ``upper`` the smallest shown feasible, with
    the corresponding solutions as certificates. If ``lo`` is already
    feasible the threshold is at or below ``lo`` and ``[lo, lo]`` is returned.
    """
    if hi < lo:
        raise BracketInvalid(f"empty interval [{lo}, {hi}]")

    def check(t):
        sol = solve(builder(t), gap_tol=gap_tol, backend=backend)
        return is_feasible(sol, feas_tol), sol

    ok_hi, sol_hi = check(hi)
    if not ok_hi:
        raise BracketInvalid(f"problem infeasible at upper end {hi}")
    ok_lo, sol_lo = check(lo)
    if ok_lo:
        return Bracket(lo, lo, sol_lo, sol_lo)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        ok, sol = check(mid)
        if ok:
            hi, sol_hi = mid, sol
        else:
            lo, sol_lo = mid, sol
    return Bracket(lo, hi, sol_lo, sol_hi)
