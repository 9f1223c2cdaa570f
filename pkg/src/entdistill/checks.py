"""Randomized verification suites behind ``entdistill verify``.

Each suite returns a list of ``CheckResult``; every check counts instances
and failures so the summary is deterministic for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matcore as mc
from .divergence import d_max, d_omega, l18_bound, lhl_bound, lhl_observed
from .exponents import werner_exponent
from .postselect import beta_hat_analytic, beta_hat_bruteforce, mhb_check
from .sepset import d_omega_sep

SUITES = ("lemmas", "oracles", "werner", "all")
WERNER_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass
class CheckResult:
    name: str
    instances: int = 0
    failures: int = 0
    worst: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, ok: bool, score: float = 0.0, note: str | None = None):
        self.instances += 1
        self.worst = max(self.worst, float(score))
        if not ok:
            self.failures += 1
            if note and len(self.notes) < 3:
                self.notes.append(note)


def random_pair(d, rng, min_eig=1e-2):
    return mc.full_rank_state(d, rng, min_eig), mc.full_rank_state(d, rng, min_eig)


def random_channel(d_in, d_out, rng, env=2):
    """Kraus operators of a random channel from a Haar isometry."""
    u = mc.haar_unitary(d_out * env, rng)[:, :d_in]
    return [u[k * d_out:(k + 1) * d_out, :] for k in range(env)]


def apply_kraus(ks, x):
    return sum(k @ x @ k.conj().T for k in ks)


def dpi_maps(d, rng):
    """Three channels: partial trace (when d = 4), depolarizing and a random channel."""
    maps = []
    if d == 4:
        maps.append(("partial trace", lambda x: mc.partial_trace(x, "B", (2, 2))))
    maps.append(("depolarizing", lambda x: 0.7 * x + 0.3 * np.trace(x) * np.eye(d) / d))
    ks = random_channel(d, d, rng)
    maps.append(("random channel", lambda x: apply_kraus(ks, x)))
    if len(maps) < 3:
        ks2 = random_channel(d, 2, rng, env=d)
        maps.append(("random compression", lambda x: apply_kraus(ks2, x)))
    return maps


def lemma_checks(seed: int = 0, pairs: int = 100) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    tdist = CheckResult("trace-distance bound")
    pert = CheckResult("perturbation bound")
    pinch_low = CheckResult("pinching lower bound")
    pinch_high = CheckResult("pinching upper bound")
    add = CheckResult("tensor additivity")
    dpi = CheckResult("data processing")
    for _ in range(pairs):
        d = int(rng.choice([2, 3, 4]))
        r, s = random_pair(d, rng)
        tn = mc.trace_norm(r - s)
        tdist.record(l18_bound(r, s) >= tn - 1e-10, tn - l18_bound(r, s))
        for eps in (1e-4, 1e-3, 1e-2):
            b, o = lhl_bound(r, s, eps), lhl_observed(r, s, eps)
            pert.record(o <= b + 1e-12, o / b if b > 0 else np.inf, f"d={d} eps={eps}: observed {o:.4g} > bound {b:.4g}")
        sw = mhb_check(r, s)
        pinch_low.record(sw.right_holds, sw.rhs - sw.mid)
        pinch_high.record(sw.left_holds, sw.mid - sw.lhs, f"d={d}: {sw.lhs:.4g} < {sw.mid:.4g}")
        r2, s2 = random_pair(2, rng)
        joint = d_omega(np.kron(r, r2), np.kron(s, s2)).value
        parts = d_omega(r, s).value + d_omega(r2, s2).value
        add.record(abs(joint - parts) <= 1e-8, abs(joint - parts))
        base = d_omega(r, s).value
        for name, fn in dpi_maps(d, rng):
            v = d_omega(fn(r), fn(s)).value
            dpi.record(v <= base + 1e-9, v - base, f"{name}: {v:.4g} > {base:.4g}")
    return [tdist, pert, pinch_low, pinch_high, add, dpi]


def oracle_checks(seed: int = 0, pairs: int = 20) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    dm = CheckResult("max-relative entropy: closed form vs SDP")
    beta = CheckResult("conditional exponent: formula vs brute force")
    for _ in range(pairs):
        r, s = random_pair(2, rng)
        a, b = d_max(r, s).value, d_max(r, s, method="sdp").value
        dm.record(abs(a - b) <= 1e-6, abs(a - b))
        omega = 2.0 ** d_omega(s, r).value
        for eps in (0.1, 0.5):
            br = beta_hat_bruteforce(eps, r, s)
            exact = beta_hat_analytic(eps, omega)
            err = abs(br.center - exact)
            beta.record(br.contains(exact, 1e-6) and err <= 1e-4, err, f"eps={eps}: {br.lower:.6g}..{br.upper:.6g} vs {exact:.6g}")
    return [dm, beta]


def werner_row(p: float, d: int = 2, rng=None) -> dict:
    br = d_omega_sep(mc.werner_state(p, d), (d, d), rng=rng)
    return {"p": p, "closed_form": werner_exponent(p), "sdp_lower": br.lower, "sdp_upper": br.upper}


def werner_checks(seed: int = 0, grid=WERNER_GRID) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    inside = CheckResult("Werner bracket contains closed form")
    width = CheckResult("Werner bracket width")
    for p in grid:
        row = werner_row(p, rng=rng)
        cf = row["closed_form"]
        ok = row["sdp_lower"] - 1e-9 <= cf <= row["sdp_upper"] + 1e-9
        inside.record(ok, 0.0, f"p={p}: [{row['sdp_lower']:.8g}, {row['sdp_upper']:.8g}] vs {cf:.8g}")
        w = row["sdp_upper"] - row["sdp_lower"] if p < 0.5 else row["sdp_upper"]
        limit = 1e-5 if p < 0.5 else 1e-6
        width.record(w <= limit, w, f"p={p}: width {w:.3g}")
    return [inside, width]


def run_suite(suite: str, seed: int = 0) -> dict[str, list[CheckResult]]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    names = ("lemmas", "oracles", "werner") if suite == "all" else (suite,)
    fns = {"lemmas": lemma_checks, "oracles": oracle_checks, "werner": werner_checks}
    return {name: fns[name](seed) for name in names}
