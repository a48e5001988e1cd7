"""Desk-scale invariant suite behind ``heatiss verify``.

Each check returns (passed, detail). Sizes are kept small so the whole suite
runs in well under a minute; the pytest acceptance module runs the full-size
versions.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
import scipy.linalg

from .assembled_spectrum import assemble_generator, spectral_abscissa, stability_report
from .delay_sim import DisturbanceSignal, check_continuous_dependence, simulate
from .heat_kernel import Grid, dirichlet_closed_form, dirichlet_numeric, max_row_sum, transfer_gamma_dlambda
from .positive_lti import LtiTriple, closed_loop_semigroup
from .system_model import (
    SystemParams,
    check_iss_condition,
    gamma_d0_matrix,
    spectral_radius_gamma_d0,
    transfer_bound_tau,
)


def random_params(rng, c_max=3.0) -> SystemParams:
    return SystemParams.from_arrays(
        rng.uniform(0.2, 5.0, 3), rng.uniform(0.2, 5.0, 3), rng.uniform(0.0, c_max, 3), rng.uniform(0.1, 2.0, 3)
    )


def check_certificate_equivalence(params, rng, draws=1000):
    bad_iff, worst = 0, 0.0
    for _ in range(draws):
        p = random_params(rng)
        cert = check_iss_condition(p)
        rho = spectral_radius_gamma_d0(p)
        if cert.iss_holds != (rho < 1):
            bad_iff += 1
        eig = float(np.abs(np.linalg.eigvals(gamma_d0_matrix(p))).max())
        worst = max(worst, abs(eig - rho))
    return bad_iff == 0 and worst <= 1e-12, f"iff violations={bad_iff}, max |rho - eig|={worst:.2e}"


def check_tau_monotone(params, rng):
    lams = np.logspace(-2, 6, 60)
    taus = np.array([transfer_bound_tau(params, lam) for lam in lams])
    # strictly decreasing until both terms underflow to exactly zero
    steps = np.diff(taus)
    ok = bool(np.all((steps < 0) | ((steps == 0) & (taus[1:] == 0))) and taus[-1] < 1e-6)
    bounded = all(max_row_sum(transfer_gamma_dlambda(params, lam)) <= transfer_bound_tau(params, lam)
                  for lam in (1.0, 10.0, 100.0, 1000.0))
    return ok and bounded, f"tau(1e-2)={taus[0]:.4g}, tau(1e6)={taus[-1]:.2e}"


def check_dirichlet_order(params, rng):
    p = params.components[0]
    errs = []
    for n in (49, 99, 199):
        g = Grid(n)
        errs.append(np.abs(dirichlet_numeric(p, 1.0, 1.0, g).values - dirichlet_closed_form(p, 1.0, 1.0, g).values).max())
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return all(1.8 <= o <= 2.2 for o in orders), f"orders={[round(o, 3) for o in orders]}"


def check_positivity(params, rng, scenarios=10):
    worst = math.inf
    for _ in range(scenarios):
        p = params.with_coupling(rng.uniform(0.0, 2.0, 3))
        f = [rng.uniform(0, 1, 34) for _ in range(3)]
        phi = [rng.uniform(0, 1, 6) for _ in range(3)]
        bp = np.arange(0.0, 2.0, 0.25)
        dist = DisturbanceSignal.piecewise(bp, rng.uniform(0, 1, (bp.size, 3)))
        tr = simulate(p, f, phi, dist, 2.0, 0.02, n=32, keep_profiles=True)
        worst = min(worst, min(float(x.min()) for x in tr.profiles))
    return worst >= -1e-10, f"min node value={worst:.3e}"


def check_linearity(params, rng):
    n = 32
    f1 = [rng.normal(size=n + 2) for _ in range(3)]
    f2 = [rng.normal(size=n + 2) for _ in range(3)]
    d1, d2 = DisturbanceSignal.constant(rng.normal(size=3)), DisturbanceSignal.constant(rng.normal(size=3))
    both = DisturbanceSignal.constant(d1.values + d2.values)
    kw = dict(n=n, keep_profiles=True)
    a = simulate(params, f1, [0.0] * 3, d1, 1.0, 0.02, **kw)
    b = simulate(params, f2, [0.0] * 3, d2, 1.0, 0.02, **kw)
    s = simulate(params, [x + y for x, y in zip(f1, f2)], [0.0] * 3, both, 1.0, 0.02, **kw)
    err = max(float(np.abs(pa + pb - ps).max()) for pa, pb, ps in zip(a.profiles, b.profiles, s.profiles))
    return err <= 1e-10, f"max superposition error={err:.2e}"


def check_step_composition(params, rng):
    f = [rng.uniform(0, 1, 34) for _ in range(3)]
    dist = DisturbanceSignal.constant([0.3, 0.1, 0.2])
    full = simulate(params, f, [0.5] * 3, dist, 1.0, 0.02, n=32)
    half = simulate(params, f, [0.5] * 3, dist, 0.5, 0.02, n=32)
    rest = simulate(params, None, None, dist, 0.5, 0.02, state=half.final_state)
    same = all(np.array_equal(x, y) for x, y in zip(full.final_state.profiles, rest.final_state.profiles))
    return same, "bit-identical" if same else "continued run differs"


def check_generator_structure(params, rng):
    gen = assemble_generator(params, 32, 32).matrix.toarray()
    off = gen - np.diag(np.diag(gen))
    metzler = bool(off.min() >= 0)
    s = spectral_abscissa(gen)
    s0 = spectral_abscissa(assemble_generator(params.with_coupling(0.0), 32, 32))
    return metzler and s >= s0 - 1e-12, f"metzler={metzler}, s={s:.5g} >= s(c=0)={s0:.5g}"


def check_threshold_agreement(params, rng, draws=6):
    bad = []
    for _ in range(draws):
        p = random_params(rng, c_max=1.0)
        thr = np.array(check_iss_condition(p).thresholds)
        # keep couplings outside the 2% band around each threshold
        ratio = rng.choice([rng.uniform(0.3, 0.95), rng.uniform(1.05, 1.6)])
        rep = stability_report(p.with_coupling(ratio * thr), 48, 48)
        if not rep.agree:
            bad.append(round(float(ratio), 3))
    return not bad, f"disagreements at c/threshold={bad}" if bad else f"{draws} draws agree"


def check_volterra(params, rng, draws=5):
    worst, neg = 0.0, 0.0
    for _ in range(draws):
        n = int(rng.integers(2, 9))
        A = rng.uniform(0, 1, (n, n)) / n
        np.fill_diagonal(A, -rng.uniform(0.5, 2.0, n))
        B = rng.uniform(0, 1, (n, 2))
        C = rng.uniform(0, 1, (2, n))
        B *= 0.5 / np.linalg.norm(B @ C, 2)
        tri = LtiTriple(A, B, C)
        x = rng.uniform(0, 1, n)
        res = closed_loop_semigroup(tri, 1.0, x, 1e-8, return_details=True)
        worst = max(worst, float(np.abs(res.state - scipy.linalg.expm(tri.closed_loop_matrix()) @ x).max()))
        neg = min(neg, min(float(X.min()) for X in res.iterates))
    return worst <= 1e-7 and neg >= -1e-12, f"max error={worst:.2e}, min iterate={neg:.1e}"


def check_continuous_dependence_stable(params, rng):
    rep = check_continuous_dependence(params, 40, tau=1.0, dt=0.02, n=24, seed=int(rng.integers(2**31)))
    return rep.stable, f"c_tau={rep.c_tau:.5g}, refined={rep.c_tau_refined:.5g}, change={rep.relative_change:.2%}"


SUITE: list[tuple[str, Callable]] = [
    ("certificate_equivalence", check_certificate_equivalence),
    ("transfer_bound_monotone", check_tau_monotone),
    ("dirichlet_second_order", check_dirichlet_order),
    ("positivity", check_positivity),
    ("linearity", check_linearity),
    ("step_composition", check_step_composition),
    ("generator_metzler_and_monotone", check_generator_structure),
    ("threshold_agreement", check_threshold_agreement),
    ("volterra_matches_expm", check_volterra),
    ("continuous_dependence", check_continuous_dependence_stable),
]


def run_suite(params: SystemParams, seed: int) -> list[dict]:
    out = []
    for i, (name, fn) in enumerate(SUITE):
        rng = np.random.default_rng([seed, i])
        passed, detail = fn(params, rng)
        out.append({"name": name, "passed": bool(passed), "detail": detail})
    return out
