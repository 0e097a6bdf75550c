"""Acceptance suite: one PASS/FAIL line per criterion, at the required tolerances.

Run ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest
from scipy.special import gamma as G

from conftest import dipole_pair, quadrupole_triple
from dipolegap.bounds import (
    C_H,
    GaussianMixture,
    RadialSpinor,
    hardy_constant,
    herbst_check,
    moment_report,
    resolvent_constant,
    resolvent_sweep,
    sandwich_check,
    semiclassical_integral,
)
from dipolegap.errors import TargetNotReached
from dipolegap.forms import certified_lower_bound
from dipolegap.mathieu import lowest_eigenvalue
from dipolegap.potentials import (
    PhysicalParams,
    RegularizedTwoCenter,
    classify_charge,
    multipole_moments,
    tail_bound_check,
)
from dipolegap.spectrum import (
    RadialGrid,
    clustering_report,
    compare_to_towers,
    gap_spectrum_from_towers,
    solve_dirac_block,
    solve_finite_count,
    solve_towers,
)
from test_spectrum import _k_inu_zeros


def _report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] AC{n} {detail}")
    assert ok, detail


def _count(params, target, budget):
    try:
        return certified_lower_bound(params, target, budget=budget).count
    except TargetNotReached as exc:
        return exc.partial.count


def test_ac1_hardy_constant(capsys):
    c = hardy_constant(2, 1.0)
    exact = 4 * math.pi**2 / G(0.25) ** 4
    ok = abs(c - exact) <= 1e-12 * exact and abs(c - 0.229) < 1e-3 and c == C_H
    _report(capsys, 1, ok, f"C_H={c:.15g} closed form={exact:.15g}")


def test_ac2_mathieu(capsys):
    t0 = time.perf_counter()
    lams = {q: lowest_eigenvalue(q) for q in (1e-2, 1e-1, 1.0, 10.0)}
    ratio = lowest_eigenvalue(1e-3) / (-2 * 1e-6)
    dt = time.perf_counter() - t0
    ok = all(v < 0 for v in lams.values()) and 0.99 <= ratio <= 1.01 and dt < 1.0
    _report(capsys, 2, ok, f"lambda0={ {q: float(v) for q, v in lams.items()} } ratio(q=1e-3)={ratio:.8f} t={dt:.3f}s")


def test_ac3_certified_infinitude(capsys):
    p = PhysicalParams(0.5, 1.0, (1.0, 0.0))
    t0 = time.perf_counter()
    res = certified_lower_bound(p, 10)
    dt = time.perf_counter() - t0
    growth = [_count(p, 60, b) for b in (5, 10, 20)]
    ok = (res.count >= 10 and res.gram_defect < 1e-12 and all(m < 0 for m in res.margins)
          and growth[0] < growth[1] < growth[2] and dt < 60)
    _report(capsys, 3, ok, f"count={res.count} gram_defect={res.gram_defect:.1e} "
                           f"max margin={max(res.margins):.3e} budget 5/10/20 -> {growth} t={dt:.2f}s")


def test_ac4_geometric_clustering(capsys):
    p = PhysicalParams(1.0, 1.0, (1.0, 0.0))
    t0 = time.perf_counter()
    ch = solve_towers(p, RadialGrid.with_density(1.0, 1e8, 32), 1.0)[0]
    rep = clustering_report(ch)
    dt = time.perf_counter() - t0
    predicted = math.exp(-2 * math.pi / math.sqrt(-lowest_eigenvalue(1.0)))
    # independent oracle: exact Dirichlet levels of the inverse-square channel
    kap = np.array(_k_inu_zeros(math.sqrt(-lowest_eigenvalue(1.0)), 4))
    exact = 1 - np.sqrt(1 - kap**2)
    oracle_ratio = float(np.exp(np.mean(np.log(exact[1:] / exact[:-1]))))
    dev = abs(rep.ratio_estimate / predicted - 1)
    oracle_dev = abs(oracle_ratio / predicted - 1)
    ok = dev < 0.05 and oracle_dev < 0.05 and dt < 120
    _report(capsys, 4, ok, f"fitted={rep.ratio_estimate:.6e} predicted={predicted:.6e} dev={dev:.2e} "
                           f"oracle={oracle_ratio:.6e} oracle dev={oracle_dev:.2e} t={dt:.2f}s")


def test_ac5_moments(capsys):
    p = PhysicalParams(1.0, 1.0, (1.0, 0.0))
    towers = solve_towers(p, RadialGrid.with_density(1.0, 1e8, 32), 1.0)
    rep = moment_report(gap_spectrum_from_towers(towers), [0.5, 1.0, 2.0], p)
    d0 = 0.5
    gs = np.array([0.02, 0.05, 0.1, 0.2])
    vals = [semiclassical_integral(PhysicalParams(g, 1.0, (1.0, 0.0)), d0) for g in gs]
    slope = np.polyfit(np.log(gs), np.log(vals), 1)[0]
    ok = max(rep.relative_tails) < 1e-6 and abs(slope - (1 + d0)) < 1e-3
    _report(capsys, 5, ok, f"relative tails={[f'{t:.2e}' for t in rep.relative_tails]} "
                           f"gamma exponent={slope:.12f} (target {1 + d0})")


def test_ac6_classification(capsys):
    dip = classify_charge(dipole_pair())
    growth = [_count(PhysicalParams(0.5, 1.0, (1.0, 0.0)), 60, b) for b in (5, 10, 20)]
    rho = quadrupole_triple()
    quad = classify_charge(rho)
    table = multipole_moments(rho)
    C = tail_bound_check(table, np.geomspace(2, 200, 24), rho).C_l
    a = solve_finite_count(table, 1.0, RadialGrid.with_density(1e-3, 1e8, 32), 8, C)
    b = solve_finite_count(table, 1.0, RadialGrid.with_density(1e-3, 2e8, 32), 16, C)
    ok = ((dip.kind, dip.reason) == ("InfinitelyMany", "Dipole") and growth == sorted(set(growth))
          and quad.kind == "Finite" and a == b)
    _report(capsys, 6, ok, f"dipole -> {dip.kind}({dip.reason}) certified growth={growth}; "
                           f"quadrupole -> {quad.kind}, count {a} -> {b} on doubling")


def test_ac7_resolvent(capsys):
    c = resolvent_constant(1.0, 0.0, 1.0)
    samples = resolvent_sweep(PhysicalParams(1.0, 1.0, (1.0, 0.0)),
                              np.geomspace(1, 50, 20), np.linspace(0, 10, 20))
    worst = max(float(np.max(np.abs(s.kernel_entries))) / s.bound_value for s in samples)
    ok = abs(c - 5 / math.pi) < 1e-12 and all(s.within_bound for s in samples)
    _report(capsys, 7, ok, f"constant={c:.10f} (5/pi={5 / math.pi:.10f}) samples={len(samples)} "
                           f"max entry/bound={worst:.3f}")


def test_ac8_inequalities(capsys):
    rng = np.random.default_rng(2024)
    herbst = [herbst_check(GaussianMixture.random(rng), center=rng.normal(size=2)) for _ in range(50)]
    sandwich = [sandwich_check(RadialSpinor.random(rng), float(rng.uniform(0, 2)), float(rng.uniform(-2, 2)))
                for _ in range(50)]
    h_ok = all(r.margin >= -10 * r.quadrature_error for r in herbst)
    s_ok = all(r.margin >= -10 * r.quadrature_error for r in sandwich)
    probe = sandwich_check(RadialSpinor.sharpness_probe(0.02), require_smooth=False)
    ratio = probe.lhs / probe.rhs
    ok = h_ok and s_ok and ratio < 1.05
    _report(capsys, 8, ok, f"herbst 50/50={h_ok} min margin={min(r.margin for r in herbst):.3e}; "
                           f"sandwich 50/50={s_ok} min lhs/rhs={min(r.lhs / r.rhs for r in sandwich):.3f}; "
                           f"probe lhs/rhs={ratio:.6f}")


def test_ac9_cross_solver(capsys):
    p = PhysicalParams(0.75, 1.0, (1.0, 0.0))
    model = RegularizedTwoCenter(p, 0.5)
    block = solve_dirac_block(p, model, RadialGrid.with_density(1e-2, 1e6, 32), 6)
    cmp = compare_to_towers(block, p)
    certified = _count_model(p, model)
    ok = cmp.all_agree and len(cmp.energies) > 0 and len(block) >= certified >= 1
    _report(capsys, 9, ok, f"compared={len(cmp.energies)} all agree={cmp.all_agree}; "
                           f"retained={len(block)} certified={certified}")


def _count_model(p, model):
    try:
        return certified_lower_bound(p, 50, model=model, r_max=1e6).count
    except TargetNotReached as exc:
        return exc.partial.count


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
