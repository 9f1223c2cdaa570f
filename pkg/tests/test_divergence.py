import numpy as np
import pytest
from hypothesis import given, strategies as st

from entdistill import matcore as mc
from entdistill.divergence import (
    d_max,
    d_omega,
    d_omega_classical,
    l18_bound,
    lhl_bound,
    lhl_observed,
    rel_entropy,
    rel_entropy_variance,
    sandwiched_renyi,
    smoothing_point,
)
from entdistill.errors import RankDeficient, SupportMismatch, TraceMismatch, ZeroOperator

seeds = st.integers(0, 2**31 - 1)
P = np.diag([0.75, 0.25])
HALF = np.eye(2) / 2


def pair(seed, d=2):
    r = np.random.default_rng(seed)
    return mc.full_rank_state(d, r), mc.full_rank_state(d, r)


def test_dmax_examples(rng):
    r = mc.full_rank_state(3, rng)
    assert abs(d_max(r, r).value) <= 1e-12
    assert np.isclose(d_max(P, HALF).value, np.log2(1.5))
    assert np.isclose(d_max(np.diag([1.0, 0]), HALF).value, 1)
    v = d_max(HALF, np.diag([1.0, 0]))
    assert v.value == np.inf and not v.finite


def test_dmax_zero():
    with pytest.raises(ZeroOperator):
        d_max(np.zeros((2, 2)), HALF)


def test_domega_examples(rng):
    r = mc.full_rank_state(3, rng)
    assert abs(d_omega(r, 3 * r).value) <= 1e-12
    assert np.isclose(d_omega(P, HALF).value, np.log2(3))
    assert d_omega(np.diag([1.0, 0]), HALF).value == np.inf


def test_classical_examples():
    assert d_omega_classical([0.3, 0.7], [0.3, 0.7]).value == 0
    assert np.isclose(d_omega_classical([0.75, 0.25], [0.5, 0.5]).value, np.log2(3))
    assert d_omega_classical([1, 0], [0.5, 0.5]).value == np.inf


def test_entropy_examples(rng):
    r = mc.full_rank_state(3, rng)
    assert abs(rel_entropy(r, r).value) <= 1e-12
    assert abs(rel_entropy_variance(r, r)) <= 1e-12
    h = -(0.25 * np.log2(0.25) + 0.75 * np.log2(0.75))
    assert np.isclose(rel_entropy(P, HALF).value, 1 - h)
    assert rel_entropy(HALF, np.diag([1.0, 0])).value == np.inf


def test_renyi_limit():
    for seed in range(20):
        r, s = pair(seed)
        assert abs(sandwiched_renyi(1 + 1e-5, r, s).value - rel_entropy(r, s).value) <= 1e-4


@given(seeds)
def test_renyi_monotone_in_alpha(seed):
    r, s = pair(seed)
    vals = [sandwiched_renyi(a, r, s).value for a in (1.5, 2.0, 5.0)]
    assert vals[0] <= vals[1] + 1e-10 <= vals[2] + 2e-10
    assert vals[-1] <= d_max(r, s).value + 1e-10


def test_smoothing_examples(rng):
    r, s = mc.full_rank_state(2, rng), mc.full_rank_state(2, rng)
    eps, _ = smoothing_point(r, s, d_max(r, s).value)
    assert abs(eps) <= 1e-12
    eps, op = smoothing_point(P, HALF, 0.0)
    assert np.isclose(eps, 1 / 8)
    assert np.allclose(op, np.diag([0.75, 0.5]))
    eps, _ = smoothing_point(r, r, 0.0)
    assert abs(eps) <= 1e-12


@given(seeds)
def test_smoothing_certificate(seed):
    r, s = pair(seed, 3)
    lam = 0.5 * d_max(r, s).value
    eps, op = smoothing_point(r, s, lam)
    assert d_max(r, op * 2**lam).value <= lam + 1e-9 or d_max(r, op).value <= lam + 1e-9
    assert abs(0.5 * mc.trace_norm(op - s) - eps) <= 1e-10


def test_smoothing_monotone(rng):
    r, s = mc.full_rank_state(3, rng), mc.full_rank_state(3, rng)
    grid = np.linspace(0, d_max(r, s).value, 20)
    eps = [smoothing_point(r, s, lam)[0] for lam in grid]
    assert all(a >= b - 1e-12 for a, b in zip(eps, eps[1:]))


def test_smoothing_renyi_bound(rng):
    # alpha/(alpha-1) lam <= D_alpha + log2(1/(2 eps))/(alpha-1), all logs base 2
    worst = -np.inf
    for _ in range(5):
        r, s = mc.full_rank_state(2, rng, 1e-2), mc.full_rank_state(2, rng, 1e-2)
        for n in (1, 2, 3, 4):
            rn, sn = r, s
            for _ in range(n - 1):
                rn, sn = np.kron(rn, r), np.kron(sn, s)
            top = d_max(rn, sn).value
            for lam in np.linspace(0.2 * top, 0.9 * top, 4):
                eps, _ = smoothing_point(rn, sn, lam)
                if eps <= 0:
                    continue
                for alpha in (1.1, 1.5, 2.0):
                    lhs = alpha / (alpha - 1) * lam
                    rhs = sandwiched_renyi(alpha, rn, sn).value + np.log2(1 / (2 * eps)) / (alpha - 1)
                    worst = max(worst, lhs - rhs)
    assert worst <= 1e-9


def test_perturbation_bound_examples(rng):
    assert lhl_bound(HALF, HALF, 0.1) == 0.0
    r, s = mc.full_rank_state(2, rng), mc.full_rank_state(2, rng)
    assert lhl_bound(r, s, 0.0) == 0.0
    assert lhl_bound(r, s, 1e-3) >= lhl_observed(r, s, 1e-3)
    with pytest.raises(RankDeficient):
        lhl_bound(np.diag([1.0, 0]), HALF, 0.1)


def test_perturbation_bound_counterexample():
    # the maximizing eigenvector switches under the shift, so the first-order bound is exceeded
    r, s = np.diag([0.52, 0.48]), np.diag([0.51, 0.49])
    obs, bound = lhl_observed(r, s, 1e-2), lhl_bound(r, s, 1e-2)
    assert bound == pytest.approx(0.00085, abs=1e-5)
    assert obs > 2 * bound
    # also exceeded when the change is measured on Omega itself
    lin = abs(2 ** d_omega(r + 1e-2 * np.eye(2), s).value - 2 ** d_omega(r, s).value)
    assert lin > bound


def test_perturbation_bound_inequality_random_pairs():
    rng = np.random.default_rng(20240601)
    bad = []
    for _ in range(100):
        d = int(rng.choice([2, 3, 4]))
        r, s = mc.full_rank_state(d, rng, 1e-2), mc.full_rank_state(d, rng, 1e-2)
        for eps in (1e-4, 1e-3, 1e-2):
            if lhl_observed(r, s, eps) > lhl_bound(r, s, eps):
                bad.append((d, eps))
    assert not bad, f"{len(bad)} of 300 violate the perturbation bound"


def test_trace_distance_bound_examples(rng):
    r = mc.full_rank_state(2, rng)
    assert abs(l18_bound(r, r)) <= 1e-12
    assert np.isclose(l18_bound(P, HALF), 2)
    with pytest.raises(TraceMismatch):
        l18_bound(P, np.eye(2))
    with pytest.raises(SupportMismatch):
        l18_bound(np.diag([1.0, 0]), HALF)


@given(seeds)
def test_trace_distance_bound_inequality(seed):
    r, s = pair(seed, 3)
    assert l18_bound(r, s) >= mc.trace_norm(r - s) - 1e-12


@given(seeds)
def test_symmetry_and_faithfulness(seed):
    r, s = pair(seed, 3)
    assert abs(d_omega(r, s).value - d_omega(s, r).value) <= 1e-10
    assert d_omega(r, s).value > 1e-8
    assert abs(d_omega(r, 2.5 * r).value) <= 1e-10


@given(seeds)
def test_additivity(seed):
    r, s = pair(seed)
    joint = d_omega(np.kron(r, r), np.kron(s, s)).value
    assert abs(joint - 2 * d_omega(r, s).value) <= 1e-8


@given(seeds)
def test_data_processing(seed):
    rng = np.random.default_rng(seed)
    r, s = mc.full_rank_state(4, rng), mc.full_rank_state(4, rng)
    base = d_omega(r, s).value
    assert d_omega(mc.partial_trace(r, "B", (2, 2)), mc.partial_trace(s, "B", (2, 2))).value <= base + 1e-8
    u = mc.haar_unitary(8, rng)[:, :4]
    ks = [u[:4], u[4:]]

    def chan(x):
        return sum(k @ x @ k.conj().T for k in ks)

    assert d_omega(chan(r), chan(s)).value <= base + 1e-8
    # transpose is positive but not completely positive
    assert d_omega(r.T, s.T).value <= base + 1e-8


def test_method_agreement():
    for seed in range(50):
        r, s = pair(seed)
        assert abs(d_max(r, s).value - d_max(r, s, method="sdp").value) <= 1e-6
        assert abs(d_omega(r, s).value - d_omega(r, s, method="sdp").value) <= 1e-6


def test_sdp_method_example():
    assert np.isclose(d_max(P, HALF, method="sdp").value, np.log2(1.5), atol=1e-7)
    assert np.isclose(d_omega(P, HALF, method="sdp").value, np.log2(3), atol=1e-7)


def test_unknown_method():
    with pytest.raises(ValueError):
        d_max(P, HALF, method="nope")
