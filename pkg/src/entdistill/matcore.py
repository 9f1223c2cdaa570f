"""Dense Hermitian linear algebra on bipartite systems.

Operators are plain complex numpy arrays. ``HermitianOperator`` wraps one
together with its bipartite dimensions, and every function here accepts
either form. When dimensions are not given they are read from the wrapper or
taken to be a square split ``d x d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isqrt

import numpy as np

from .errors import InvalidOperator

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
CLUSTER_TOL = 1e-8


@dataclass
class HermitianOperator:
    dim_a: int
    dim_b: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        n = self.dim_a * self.dim_b
        if self.dim_a < 1 or self.dim_b < 1 or self.entries.shape != (n, n):
            raise InvalidOperator(
                f"entries of shape {self.entries.shape} do not match dims "
                f"({self.dim_a}, {self.dim_b})"
            )
        check_hermitian(self.entries, HERMITIAN_TOL)

    @property
    def dims(self) -> tuple[int, int]:
        return (self.dim_a, self.dim_b)

    @property
    def matrix(self) -> np.ndarray:
        return self.entries


@dataclass
class SpectralDecomposition:
    """Eigen-decomposition with eigenvalues sorted in descending order.

    ``clusters`` groups indices of eigenvalues that agree to within
    ``CLUSTER_TOL`` relative to the spectral radius; each entry is
    ``(mean eigenvalue, index array)``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clusters: list = field(default_factory=list)

    def projectors(self) -> list[tuple[float, np.ndarray]]:
        out = []
        for value, idx in self.clusters:
            v = self.eigenvectors[:, idx]
            out.append((value, v @ v.conj().T))
        return out


def as_array(x) -> np.ndarray:
    if isinstance(x, HermitianOperator):
        return x.entries
    arr = np.asarray(x, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidOperator(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidOperator("matrix has non-finite entries")
    return arr


def resolve_dims(x, dims=None) -> tuple[int, int]:
    if dims is not None:
        da, db = int(dims[0]), int(dims[1])
    elif isinstance(x, HermitianOperator):
        da, db = x.dims
    else:
        n = np.shape(x)[0]
        r = isqrt(n)
        if r * r != n:
            raise InvalidOperator(f"cannot split dimension {n} into two equal factors")
        da, db = r, r
    if da * db != np.shape(as_array(x))[0]:
        raise InvalidOperator(f"dims ({da}, {db}) do not match matrix size {np.shape(x)[0]}")
    return da, db


def hermitian_defect(x) -> float:
    a = as_array(x)
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def check_hermitian(x, tol: float = HERMITIAN_TOL) -> np.ndarray:
    a = as_array(x)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if hermitian_defect(a) > tol * scale:
        raise InvalidOperator(f"matrix is not Hermitian (defect {hermitian_defect(a):.3e})")
    return a


def hermitize(x) -> np.ndarray:
    a = as_array(x)
    return (a + a.conj().T) / 2


def check_state(x, substate: bool = True) -> np.ndarray:
    """Validate a density operator, or a subnormalized one when ``substate``."""
    a = check_hermitian(x)
    evals = np.linalg.eigvalsh(hermitize(a))
    if evals[0] < -PSD_TOL:
        raise InvalidOperator(f"operator is not positive (min eigenvalue {evals[0]:.3e})")
    tr = float(np.real(np.trace(a)))
    if substate:
        if not (0.0 < tr <= 1.0 + TRACE_TOL):
            raise InvalidOperator(f"substate trace {tr} outside (0, 1]")
    elif abs(tr - 1.0) > TRACE_TOL:
        raise InvalidOperator(f"state trace {tr} differs from 1")
    return a


def eig_hermitian(x) -> SpectralDecomposition:
    a = hermitize(check_hermitian(x))
    w, v = np.linalg.eigh(a)
    w, v = w[::-1], v[:, ::-1]
    radius = float(np.max(np.abs(w))) if w.size else 0.0
    tol = CLUSTER_TOL * max(radius, np.finfo(float).tiny)
    clusters = []
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[start] - w[i] > tol:
            idx = np.arange(start, i)
            clusters.append((float(np.mean(w[idx])), idx))
            start = i
    return SpectralDecomposition(w, v, clusters)


def clip_psd(x, tol: float = PSD_TOL) -> np.ndarray:
    """Zero out eigenvalues in ``[-tol, 0)``; larger negative parts are kept."""
    w, v = np.linalg.eigh(hermitize(x))
    w = np.where((w < 0) & (w >= -tol), 0.0, w)
    return (v * w) @ v.conj().T


def support_projector(x, rel_tol: float = 1e-9) -> np.ndarray:
    w, v = np.linalg.eigh(hermitize(x))
    cut = rel_tol * max(float(np.max(np.abs(w))), np.finfo(float).tiny)
    keep = v[:, w > cut]
    return keep @ keep.conj().T


def mat_function(x, func, rel_tol: float | None = None) -> np.ndarray:
    """Apply ``func`` to the eigenvalues of a Hermitian matrix.

    With ``rel_tol`` set, eigenvalues at or below ``rel_tol`` times the
    largest one are treated as zero and mapped to zero (support convention).
    """
    w, v = np.linalg.eigh(hermitize(x))
    if rel_tol is None:
        fw = func(w)
    else:
        cut = rel_tol * max(float(np.max(np.abs(w))), np.finfo(float).tiny)
        mask = w > cut
        fw = np.zeros_like(w)
        fw[mask] = func(w[mask])
    return (v * fw) @ v.conj().T


def psd_sqrt(x) -> np.ndarray:
    return mat_function(x, lambda w: np.sqrt(np.clip(w, 0.0, None)))


def positive_part(x) -> np.ndarray:
    return mat_function(x, lambda w: np.clip(w, 0.0, None))


def partial_trace(x, sys: str = "B", dims=None) -> np.ndarray:
    a = as_array(x)
    da, db = resolve_dims(x, dims)
    t = a.reshape(da, db, da, db)
    if sys == "B":
        return np.einsum("ijkj->ik", t)
    if sys == "A":
        return np.einsum("ijil->jl", t)
    raise ValueError(f"unknown subsystem {sys!r}")


def partial_transpose(x, dims=None, sys: str = "B") -> np.ndarray:
    a = as_array(x)
    da, db = resolve_dims(x, dims)
    t = a.reshape(da, db, da, db)
    if sys == "B":
        return t.transpose(0, 3, 2, 1).reshape(da * db, da * db)
    if sys == "A":
        return t.transpose(2, 1, 0, 3).reshape(da * db, da * db)
    raise ValueError(f"unknown subsystem {sys!r}")


def trace_norm(x) -> float:
    return float(np.sum(np.linalg.svd(as_array(x), compute_uv=False)))


def fidelity(rho, sigma) -> float:
    """Root fidelity ``|| sqrt(rho) sqrt(sigma) ||_1``."""
    return trace_norm(psd_sqrt(rho) @ psd_sqrt(sigma))


def real_embed(x) -> np.ndarray:
    """Map a complex ``n x n`` matrix to the real ``2n x 2n`` matrix [[Re, -Im], [Im, Re]]."""
    a = as_array(x)
    re, im = a.real, a.imag
    return np.block([[re, -im], [im, re]])


def real_unembed(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    n = y.shape[0] // 2
    re = (y[:n, :n] + y[n:, n:]) / 2
    im = (y[n:, :n] - y[:n, n:]) / 2
    return re + 1j * im


# --- standard operators -------------------------------------------------


def max_entangled(d: int) -> np.ndarray:
    """Projector onto (1/sqrt d) sum_i |ii>."""
    v = np.eye(d, dtype=complex).reshape(d * d) / np.sqrt(d)
    return np.outer(v, v.conj())


def swap_operator(d: int) -> np.ndarray:
    f = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            f[j * d + i, i * d + j] = 1.0
    return f


def sym_projector(d: int) -> np.ndarray:
    return (np.eye(d * d) + swap_operator(d)) / 2


def antisym_projector(d: int) -> np.ndarray:
    return (np.eye(d * d) - swap_operator(d)) / 2


def werner_state(p: float, d: int) -> np.ndarray:
    """Weight ``p`` on the normalized symmetric projector, ``1 - p`` on the antisymmetric one."""
    ps = sym_projector(d) * 2 / (d * (d + 1))
    pa = antisym_projector(d) * 2 / (d * (d - 1))
    return p * ps + (1 - p) * pa


def isotropic_state(f: float, d: int) -> np.ndarray:
    """Overlap ``f`` with the maximally entangled state, rest spread uniformly."""
    psi = max_entangled(d)
    return f * psi + (1 - f) * (np.eye(d * d) - psi) / (d * d - 1)


def group_copies(x, n: int, dims) -> np.ndarray:
    """Reorder an operator on (A1 B1)(A2 B2)... into (A1 A2 ...)(B1 B2 ...)."""
    a = as_array(x)
    da, db = dims
    t = a.reshape([da, db] * n * 2)
    rows = [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]
    cols = [2 * n + r for r in rows]
    size = (da * db) ** n
    return t.transpose(rows + cols).reshape(size, size)


def tensor_power(x, n: int, dims=None) -> tuple[np.ndarray, tuple[int, int]]:
    """``x`` to the n-th tensor power, grouped as (A^n)(B^n) for the bipartite cut."""
    a = as_array(x)
    da, db = resolve_dims(x, dims)
    out = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        out = np.kron(out, a)
    return group_copies(out, n, (da, db)), (da**n, db**n)


def kron_all(ops) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, as_array(op))
    return out


# --- sampling -----------------------------------------------------------

MIN_EIG_FULL_RANK = 1e-3


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def haar_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def full_rank_state(d: int, rng: np.random.Generator, min_eig: float = MIN_EIG_FULL_RANK) -> np.ndarray:
    """Hilbert-Schmidt random state, mixed with I/d just enough to reach ``min_eig``."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = g @ g.conj().T
    rho = hermitize(rho / np.trace(rho).real)
    lo = float(np.linalg.eigvalsh(rho)[0])
    if lo < min_eig:
        w = (min_eig - lo) / (1.0 / d - lo)
        rho = (1 - w) * rho + w * np.eye(d) / d
    return rho


def product_pure(da: int, db: int, rng: np.random.Generator) -> np.ndarray:
    v = np.kron(haar_vector(da, rng), haar_vector(db, rng))
    return np.outer(v, v.conj())


def random_povm(k: int, d: int, rng: np.random.Generator) -> list[np.ndarray]:
    gs = []
    for _ in range(k):
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        gs.append(g @ g.conj().T)
    inv_sqrt = mat_function(sum(gs), lambda w: w**-0.5)
    return [hermitize(inv_sqrt @ g @ inv_sqrt) for g in gs]


def sample(kind: str, rng: np.random.Generator, **kw):
    """Dispatch to one of the samplers by name."""
    table = {
        "haar_unitary": haar_unitary,
        "full_rank_state": full_rank_state,
        "product_pure": product_pure,
        "random_povm": random_povm,
    }
    if kind not in table:
        raise ValueError(f"unknown sample kind {kind!r}")
    return table[kind](rng=rng, **kw)
