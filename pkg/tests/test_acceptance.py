"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed even when
output capture is on) or directly with ``python tests/test_acceptance.py``.
"""

import io
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from entdistill import matcore as mc
from entdistill.checks import WERNER_GRID, dpi_maps, lemma_checks, random_pair
from entdistill.cli import main, parse_csv
from entdistill.divergence import d_max, d_omega
from entdistill.exponents import distill_exponent_bracket, dne_exponent_bracket, werner_exponent
from entdistill.instruments import (
    DilSubchannel,
    IsoSubchannel,
    adjoint_iso,
    apply_iso,
    dne_check_dil,
    dne_check_iso,
    ne_check_dil,
    ne_check_iso,
    ne_to_dne,
    twirl,
)
from entdistill.postselect import beta_hat_analytic, beta_hat_bruteforce
from entdistill.sepset import d_omega_sep, ratio_ascent, ppt_bisection, ppt_min_eig, werner_witness_tensor, witness_lower, witness_value

SEED = 20240601


# --- criteria --------------------------------------------------------------


def werner_closed_form():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    bad = []
    for p in (0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45):
        br = d_omega_sep(mc.werner_state(p, 2), (2, 2), rng=rng)
        cf = np.log2((1 - p) / p)
        if not (br.lower - 1e-9 <= cf <= br.upper + 1e-9 and br.width <= 1e-5):
            bad.append(f"p={p} [{br.lower:.8g}, {br.upper:.8g}]")
    for p in (0.5, 0.6, 0.75, 0.9):
        br = d_omega_sep(mc.werner_state(p, 2), (2, 2), rng=rng)
        if br.upper > 1e-6:
            bad.append(f"p={p} upper {br.upper:.3g}")
    dt = time.perf_counter() - t0
    if dt >= 60:
        bad.append(f"runtime {dt:.1f} s")
    return not bad, f"13 Werner points in {dt:.1f} s" + (f"; {bad}" if bad else "")


def tensor_power_witness():
    t0 = time.perf_counter()
    bad = []
    for p in (0.1, 0.25, 0.4):
        rho = mc.werner_state(p, 2)
        r2, d2 = mc.tensor_power(rho, 2, (2, 2))
        target = np.log2((1 - p) / p)
        # independent routes: PPT bisection, the SDP witness dual, and the product witness
        br = ppt_bisection(r2, d2, hi=2 * target + 0.5, tol=1e-6)
        wv, _ = witness_lower(r2, d2)
        a, b = werner_witness_tensor(p, 2, 2)
        tv = witness_value(a, b, r2)
        for name, v in (("bisection", br.lower), ("witness dual", wv), ("product witness", tv)):
            if abs(v / 2 - target) > 1e-4:
                bad.append(f"p={p} {name} {v / 2:.8g} vs {target:.8g}")
    dt = time.perf_counter() - t0
    if dt >= 300:
        bad.append(f"runtime {dt:.1f} s")
    return not bad, f"3 two-copy Werner states in {dt:.1f} s" + (f"; {bad}" if bad else "")


def beta_formula_vs_bruteforce():
    rng = np.random.default_rng(SEED)
    worst, bad = 0.0, []
    for i in range(20):
        r, s = random_pair(2, rng)
        omega = 2.0 ** d_omega(s, r).value
        for eps in (0.1, 0.5):
            br = beta_hat_bruteforce(eps, r, s)
            exact = beta_hat_analytic(eps, omega)
            err = abs(br.center - exact)
            worst = max(worst, err)
            if not (br.contains(exact, 1e-9) and err <= 1e-4):
                bad.append(f"pair {i} eps={eps}: [{br.lower:.8g}, {br.upper:.8g}] vs {exact:.8g}")
    return not bad, f"40 instances, worst center error {worst:.2e}" + (f"; {bad[:3]}" if bad else "")


def method_agreement():
    rng = np.random.default_rng(SEED)
    dm = add = dpi = 0.0
    fails = 0
    for _ in range(50):
        d = int(rng.choice([2, 3, 4]))
        r, s = random_pair(d, rng)
        e = abs(d_max(r, s).value - d_max(r, s, method="sdp").value)
        dm = max(dm, e)
        fails += e > 1e-6
        r2, s2 = random_pair(2, rng)
        e = abs(d_omega(np.kron(r, r2), np.kron(s, s2)).value - d_omega(r, s).value - d_omega(r2, s2).value)
        add = max(add, e)
        fails += e > 1e-8
        base = d_omega(r, s).value
        for _, fn in dpi_maps(d, rng):
            e = d_omega(fn(r), fn(s)).value - base
            dpi = max(dpi, e)
            fails += e > 1e-9
    return fails == 0, f"dmax gap {dm:.1e}, additivity gap {add:.1e}, worst DPI excess {dpi:.1e}, {fails} failures"


def inequality_suites():
    res = lemma_checks(SEED, pairs=100)
    parts = [f"{r.name} {r.instances - r.failures}/{r.instances}" for r in res if r.name != "tensor additivity" and r.name != "data processing"]
    ok = all(r.passed for r in res)
    return ok, "; ".join(parts)


def _random_instrument(rng):
    a = mc.full_rank_state(4, rng)
    b = mc.full_rank_state(4, rng)
    a = a + rng.uniform(0, 1.5) ** 2 * mc.max_entangled(2)
    s = np.linalg.eigvalsh(a + b)[-1] * rng.uniform(1, 1.5)
    inst = IsoSubchannel(2, a / s, b / s, (2, 2))
    # place the budget near the sampled worst ratio so both verdicts occur
    probe, _, _ = ratio_ascent(inst.m_op, inst.n_op, (2, 2), rng=rng, restarts=4)
    return inst, max(0.0, float(np.log2(probe * rng.uniform(0.8, 1.25))))


def _sampled_inputs(rng, k=100):
    # the extreme overlaps with Psi: 1/m at |00> and 0 at |01>
    out = [np.diag([1.0, 0, 0, 0]), np.diag([0, 1.0, 0, 0])]
    for _ in range(k):
        v = np.kron(mc.haar_vector(2, rng), mc.haar_vector(2, rng))
        x = np.outer(v, v.conj())
        out += [x, twirl(x, 2)]
    return out


def _output_distance(s, x):
    out = apply_iso(s, x)
    if np.real(np.trace(out)) <= 1e-14:
        return None
    return d_omega_sep(out, (2, 2))


def membership_and_conversion():
    rng = np.random.default_rng(SEED)
    tally = {"yes": 0, "no": 0, "unknown": 0}
    dne_tally = dict(tally)
    contradictions = []
    for i in range(50):
        s, delta = _random_instrument(rng)
        ne = ne_check_iso(s, delta, rng=rng)
        dne = dne_check_iso(s, delta, rng=rng)
        tally[ne.verdict] += 1
        dne_tally[dne.verdict] += 1
        xs = _sampled_inputs(rng)
        # the definitional check: separable distance of the output for the worst sampled input
        fs = [np.real(np.trace(s.m_op @ x)) / max(np.real(np.trace((s.m_op + s.n_op) @ x)), 1e-300) for x in xs]
        worst = _output_distance(s, xs[int(np.argmax(fs))])
        if ne.verdict == "yes" and worst is not None and worst.lower > delta + 1e-6:
            contradictions.append(f"#{i} NE yes but sampled output at {worst.lower:.6g} > {delta:.6g}")
        if ne.verdict == "no":
            a, b = ne.evidence["ratio"].lower_certificate
            v = np.kron(a, b)
            br = _output_distance(s, np.outer(v, v.conj()))
            if br is not None and br.upper <= delta:
                contradictions.append(f"#{i} NE no but witness input output at {br.upper:.6g} <= {delta:.6g}")
        # adjoint images of separable outputs must be separable (PPT is exact at 2x2)
        adj_bad = min(ppt_min_eig(adjoint_iso(s, x), (2, 2)) for x in xs) < -1e-9
        if dne.verdict == "yes" and (adj_bad or ne.verdict != "yes"):
            contradictions.append(f"#{i} DNE yes but sampled adjoint image not separable")
        if dne.verdict == "no" and ne.verdict == "yes" and not adj_bad:
            contradictions.append(f"#{i} DNE no without a sampled witness")
    conv_no, conv_n = 0, 0
    while conv_n < 50:
        g = mc.full_rank_state(4, rng) * rng.uniform(0.3, 1)
        d = mc.full_rank_state(4, rng) * rng.uniform(0.3, 1)
        s = DilSubchannel(2, g, d)
        eps = float(rng.uniform(0.2, 2.0))
        if ne_check_dil(s, eps, rng).verdict != "yes":
            continue
        conv_n += 1
        conv_no += dne_check_dil(ne_to_dne(s), eps, rng).verdict == "no"
    ok = not contradictions and conv_no == 0
    detail = f"NE verdicts {tally}, DNE verdicts {dne_tally}, {len(contradictions)} contradictions; conversion: {conv_no}/50 DNE-no"
    return ok, detail + (f"; {contradictions[:3]}" if contradictions else "")


def exponent_pipeline():
    rep = distill_exponent_bracket(mc.werner_state(0.25, 2), n=1, m=2, delta=0.0)
    eps = rep.epsilon
    lo_off, hi_off = np.log2(eps / (1 - eps)), np.log2(1 / (1 - eps))
    bad = []
    if eps != 0.5:
        bad.append(f"eps {eps}")
    if abs(rep.distance.lower - np.log2(3)) > 1e-5 or abs(rep.distance.upper - np.log2(3)) > 1e-5:
        bad.append(f"distance [{rep.distance.lower}, {rep.distance.upper}]")
    if rep.bracket.lower != rep.distance.lower + lo_off or rep.bracket.upper != rep.distance.upper + hi_off:
        bad.append("sandwich offsets")
    rng = np.random.default_rng(SEED)
    states = [mc.werner_state(p, 2) for p in (0.1, 0.25, 0.4, 0.7)]
    states += [mc.full_rank_state(4, rng, 1e-2) for _ in range(4)]
    worst = -np.inf
    for rho in states:
        ne = distill_exponent_bracket(rho, n=1, m=2, rng=rng)
        dne = dne_exponent_bracket(rho, n=1, m=2, rng=rng)
        worst = max(worst, dne.bracket.upper - ne.bracket.upper)
    if worst > 1e-8:
        bad.append(f"dne upper exceeds ne upper by {worst:.3g}")
    detail = f"Werner 1/4 bracket [{rep.bracket.lower:.8f}, {rep.bracket.upper:.8f}], max(dne - ne upper) {worst:.2e}"
    return not bad, detail + (f"; {bad}" if bad else "")


def werner_figure_csv():
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(["werner", "--threads", "4", "--seed", str(SEED)])
    rows = parse_csv(buf.getvalue())
    bad = [r["p"] for r in rows if r["closed_form"] != max(0.0, np.log2((1 - r["p"]) / r["p"]))]
    ok = code == 0 and [r["p"] for r in rows] == list(WERNER_GRID) and not bad
    return ok, f"{len(rows)} rows, exact mismatches at {bad}" if bad else f"{len(rows)} rows, closed_form exact"


CRITERIA = [
    (1, "Werner closed form", werner_closed_form),
    (2, "two-copy witness", tensor_power_witness),
    (3, "conditional exponent formula", beta_formula_vs_bruteforce),
    (4, "method agreement", method_agreement),
    (5, "inequality suites", inequality_suites),
    (6, "membership and conversion", membership_and_conversion),
    (7, "exponent pipeline", exponent_pipeline),
    (8, "Werner CSV", werner_figure_csv),
]


def report(num, name, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {num} ({name}): {detail}"


@pytest.mark.parametrize("num, name, fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(num, name, fn, capsys):
    ok, detail = fn()
    with capsys.disabled():
        print("\n" + report(num, name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    for num, name, fn in CRITERIA:
        print(report(num, name, *fn()), flush=True)
