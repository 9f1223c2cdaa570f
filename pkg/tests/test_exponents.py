import numpy as np
import pytest

from entdistill import matcore as mc
from entdistill.errors import ConversionUnknown, PreconditionViolation, SizeGuard
from entdistill.exponents import (
    achievability_threshold,
    cost_gap_witness,
    cost_lower_bound,
    distill_exponent_bracket,
    dne_exponent_bracket,
    error_threshold,
    sandwich,
    separable_distance,
    werner_exponent,
)
from entdistill.instruments import DilSubchannel, dilution_fidelity, ne_check_dil

LOG3 = np.log2(3)


def test_werner_exponent_values():
    assert werner_exponent(0.25) == pytest.approx(LOG3, abs=1e-15)
    assert werner_exponent(0.5) == 0.0
    assert werner_exponent(0.75) == 0.0
    assert werner_exponent(0.0) == np.inf
    with pytest.raises(ValueError):
        werner_exponent(1.5)


def test_error_threshold():
    assert error_threshold(2, 0.0) == 0.5
    vals = [error_threshold(m, 0.0) for m in range(2, 40)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.03
    assert achievability_threshold(2, 0.0) == 1.0


def test_werner_sandwich_one_copy():
    rep = distill_exponent_bracket(mc.werner_state(0.25, 2), n=1, m=2, delta=0.0)
    assert rep.epsilon == 0.5
    assert rep.distance.lower == pytest.approx(LOG3, abs=1e-5)
    assert rep.distance.upper == pytest.approx(LOG3, abs=1e-5)
    # offsets are log2(eps/(1-eps)) = 0 and log2(1/(1-eps)) = 1
    assert rep.bracket.lower == pytest.approx(rep.distance.lower, abs=1e-12)
    assert rep.bracket.upper == pytest.approx(rep.distance.upper + 1, abs=1e-12)
    assert rep.bracket.lower <= LOG3 + 1e-6 and LOG3 + 1 <= rep.bracket.upper + 1e-6
    assert rep.beta.lower <= rep.beta.upper
    assert rep.bracket.contains(rep.beta.lower, 1e-9)


@pytest.mark.parametrize("p", [0.1, 0.25, 0.4])
def test_werner_two_copies_match_one(p):
    one = distill_exponent_bracket(mc.werner_state(p, 2), n=1, m=2)
    two = distill_exponent_bracket(mc.werner_state(p, 2), n=2, m=2)
    assert abs(two.bracket.lower - one.bracket.lower) <= 1e-4
    assert abs(two.distance.lower / 2 - werner_exponent(p)) <= 1e-4


def test_separable_bracket_upper_small():
    rep = distill_exponent_bracket(mc.werner_state(0.7, 2), n=1, m=2)
    assert rep.distance.upper <= 1e-6
    # at eps = 1/2 the sandwich upper collapses to the 1 bit offset
    assert rep.bracket.upper <= 1 + 1e-6
    two = distill_exponent_bracket(mc.werner_state(0.7, 2), n=2, m=2)
    assert two.distance.upper <= 1e-6


def test_two_copy_lower_superadditive(rng):
    for _ in range(3):
        r = mc.full_rank_state(4, rng, 1e-2)
        one, _, _ = separable_distance(r, 1, (2, 2), rng=rng)
        two, _, _ = separable_distance(r, 2, (2, 2), rng=rng)
        assert two.lower / 2 >= one.lower - 1e-6
        assert two.upper <= 2 * one.upper + 1e-6


def test_size_guard():
    with pytest.raises(SizeGuard):
        distill_exponent_bracket(mc.werner_state(0.3, 2), n=3)
    with pytest.raises(SizeGuard):
        distill_exponent_bracket(mc.werner_state(0.3, 3), n=2)


def test_dne_below_ne():
    for p in (0.1, 0.25, 0.7):
        rho = mc.werner_state(p, 2)
        ne = distill_exponent_bracket(rho, n=1, m=2)
        dne = dne_exponent_bracket(rho, n=1, m=2)
        assert dne.bracket.upper <= ne.bracket.upper + 1e-8
        assert dne.distance.upper <= dne.extra["all_measurements_distance"].upper + 1e-8
        assert dne.extra["converse_threshold"] == 0.5
        assert dne.extra["achievability_threshold"] == 1.0


def test_commuting_state_measured_equals_full():
    rho = np.diag([0.4, 0.1, 0.1, 0.4])
    rep = dne_exponent_bracket(rho, n=1, m=2)
    full = rep.extra["all_measurements_distance"]
    assert abs(rep.distance.upper - full.upper) <= 1e-5


def test_sandwich_degenerate():
    assert sandwich(1.0, 0.0, 1.0).upper == np.inf


def test_report_json():
    d = distill_exponent_bracket(mc.werner_state(0.25, 2)).to_dict()
    assert set(d["bracket"]) == {"lower", "upper"} and "lower" in d["sources"]


def test_cost_lower_bound_examples():
    psi = mc.max_entangled(2)
    b = cost_lower_bound(psi, 0.0, 0.1)
    assert b.bound == pytest.approx(0.8, abs=1e-6)
    assert not b.vacuous
    sep = mc.werner_state(0.6, 2)
    v = cost_lower_bound(sep, 0.0, 0.1)
    assert v.vacuous and v.bound <= -0.2 + 1e-6
    grid = [cost_lower_bound(psi, 0.1, phi).bound for phi in (0.01, 0.1, 0.5, 1.0)]
    assert all(a >= b for a, b in zip(grid, grid[1:]))


def test_cost_smoothing_lowers_value():
    psi = mc.max_entangled(2)
    vals = [cost_lower_bound(psi, eps, 0.1).smoothed_value for eps in (0.0, 0.05, 0.2)]
    assert vals[0] == pytest.approx(1.0, abs=1e-6)
    assert vals[0] >= vals[1] >= vals[2]
    assert cost_lower_bound(psi, 0.2, 0.1).unsmoothed_value == pytest.approx(1.0, abs=1e-6)


def test_cost_gap_witness_trivial():
    sep = mc.werner_state(0.6, 2)
    rep = cost_gap_witness(DilSubchannel(2, sep, sep), 0.1)
    assert np.array_equal(rep.subchannel.gamma, sep)
    assert rep.overhead_ebits == 1.0
    assert rep.verdict.verdict == "yes"


def test_cost_gap_witness_preserves_fidelity(rng):
    for _ in range(4):
        g = mc.full_rank_state(4, rng) * 0.7
        d = mc.full_rank_state(4, rng) * 0.6
        s = DilSubchannel(2, g, d)
        eps = max(b.upper for b in ne_check_dil(s, 1.0, rng).evidence["distances"].values()) * 1.05 + 1e-3
        try:
            rep = cost_gap_witness(s, eps, rng)
        except ConversionUnknown:
            continue
        t = mc.full_rank_state(4, rng)
        a, b = dilution_fidelity(s, t), dilution_fidelity(rep.subchannel, t)
        assert abs(a.normalized - b.normalized) <= 1e-12
        assert rep.overhead_ebits == 1.0


def test_cost_gap_witness_rejects_entangled_delta():
    sep = mc.werner_state(0.6, 2)
    ent = 0.9 * mc.max_entangled(2) + 0.1 * np.eye(4) / 4
    with pytest.raises(PreconditionViolation):
        cost_gap_witness(DilSubchannel(2, sep, ent), 0.1)


def test_cost_chain_on_constructed_instances(rng):
    from entdistill.exponents import cost_chain_check

    checked = 0
    for _ in range(12):
        m = int(rng.choice([2, 3, 4]))
        g = mc.full_rank_state(4, rng) * rng.uniform(0.3, 1)
        d = mc.full_rank_state(4, rng) * rng.uniform(0.3, 1)
        s = DilSubchannel(m, g, d)
        phi = max(b.upper for b in ne_check_dil(s, 1.0, rng).evidence["distances"].values())
        c = cost_chain_check(s, phi, rng)
        assert c.holds, (c.log_m, c.rhs)
        checked += 1
    # an entangled gamma with a large budget still satisfies the chain
    psi = mc.max_entangled(2)
    s = DilSubchannel(2, 0.9 * psi + 0.1 * np.eye(4) / 4, mc.werner_state(0.6, 2))
    phi = max(b.upper for b in ne_check_dil(s, 10.0).evidence["distances"].values())
    assert cost_chain_check(s, phi).holds
    assert checked == 12


def test_cost_chain_precondition():
    from entdistill.exponents import cost_chain_check

    sep = mc.werner_state(0.6, 2)
    ent = 0.9 * mc.max_entangled(2) + 0.1 * np.eye(4) / 4
    with pytest.raises(PreconditionViolation):
        cost_chain_check(DilSubchannel(2, sep, ent), 0.1)
