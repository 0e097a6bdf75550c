import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import dipole_pair, quadrupole_triple
from dipolegap.errors import (
    EmptyDistribution,
    OutsideValidity,
    PreconditionViolated,
    SingularPoint,
    ToleranceAmbiguous,
)
from dipolegap.potentials import (
    ChargeDistribution,
    DensityGrid,
    MultipoleTail,
    PhysicalParams,
    PureDipole,
    RegularizedTwoCenter,
    TwoCenter,
    charge_distribution_from_json,
    charge_distribution_to_json,
    charge_potential,
    classify_charge,
    dipole_leading_term,
    eval_potential,
    multipole_moments,
    multipole_tail_with_error,
    polar_to_plane,
    solid_harmonics,
    tail_bound_check,
)

P = PhysicalParams(1.0, 1.0, (1.0, 0.0))
coords = st.floats(-50, 50, allow_nan=False)


def test_two_center_values():
    V = TwoCenter(P)
    assert eval_potential(V, [2.0, 0.0]) == pytest.approx(2 / 3, rel=1e-15)
    assert eval_potential(V, [-2.0, 0.0]) == pytest.approx(-2 / 3, rel=1e-15)
    for y in (-3.0, 0.1, 7.0):
        assert eval_potential(V, [0.0, y]) == 0.0


def test_two_center_far_field_limit():
    r = np.geomspace(10, 1e12, 12)
    vals = TwoCenter(P).evaluate(np.stack([r, 0 * r], -1))
    assert np.all(np.abs(r**2 * vals - 2) <= 3 / r)


def test_two_center_rejects_centres():
    with pytest.raises(SingularPoint):
        TwoCenter(P).evaluate([1.0, 0.0])


@given(coords, coords)
def test_antisymmetry(x, y):
    V = TwoCenter(P)
    pt = np.array([x, y])
    if min(np.linalg.norm(pt - P.x0), np.linalg.norm(pt + P.x0)) < 1e-3:
        return
    assert eval_potential(V, -pt) == pytest.approx(-eval_potential(V, pt), rel=1e-12, abs=1e-300)


@given(st.floats(0.05, 0.5), st.floats(0, 2 * math.pi))
def test_regularised_matches_outside_caps(eps, ang):
    pt = np.array([1.0, 0.0]) + 0.6 * np.array([math.cos(ang), math.sin(ang)])
    assert RegularizedTwoCenter(P, eps).evaluate(pt) == pytest.approx(TwoCenter(P).evaluate(pt), rel=1e-13)


def test_regularised_converges_pointwise():
    pts = np.array([[0.3, 0.2], [1.2, 0.1], [-0.7, 0.5]])
    exact = TwoCenter(P).evaluate(pts)
    errs = [np.max(np.abs(RegularizedTwoCenter(P, e).evaluate(pts) - exact)) for e in (0.5, 0.1, 0.01)]
    assert errs[-1] == 0.0 and errs[0] > 0


def test_regularised_is_bounded():
    v = RegularizedTwoCenter(P, 0.25).evaluate(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert v[0] == pytest.approx(4 - 0.5) and v[1] == pytest.approx(-3.5)


def test_dipole_leading_term_examples():
    assert dipole_leading_term(1.0, 3.0, math.pi / 2) == pytest.approx(0.0, abs=1e-16)
    assert abs(dipole_leading_term(1.0, 10.0, 0.0)) == pytest.approx(0.02)


def test_dipole_term_remainder_is_cubic():
    r = np.geomspace(10, 1e4, 20)
    th = np.linspace(0, 2 * np.pi, 33)
    R, T = np.meshgrid(r, th, indexing="ij")
    diff = np.abs(TwoCenter(P).evaluate(polar_to_plane(P, R, T)) - dipole_leading_term(1.0, R, T))
    C = np.max(diff * R**3)
    assert C < 2.5  # octupole-order remainder, bounded


def test_polar_frame_points_along_minus_x0():
    pt = polar_to_plane(PhysicalParams(1.0, 1.0, (0.0, 2.0)), 3.0, 0.0)
    assert np.allclose(pt, [0.0, -3.0])


def test_pure_dipole_matches_far_field():
    pt = np.array([1e3, 2e3])
    assert PureDipole(P).evaluate(pt) == pytest.approx(TwoCenter(P).evaluate(pt), rel=1e-6)


# multipoles


def test_moments_dipole_pair():
    t = multipole_moments(dipole_pair())
    assert t.e == 0.0 and t.leading_order == 1
    assert np.allclose(t.p, [2.0, 0.0, 0.0])


def test_moments_single_charge():
    rho = ChargeDistribution([[0, 0, 0]], [3.0], support_radius=1.0)
    t = multipole_moments(rho, 6)
    assert t.e == 3.0 and np.all(t.moments[1:] == 0)


def test_moments_quadrupole():
    t = multipole_moments(quadrupole_triple())
    assert t.e == 0 and np.allclose(t.p, 0) and t.leading_order == 2
    # C_20(x-axis) = -1/2 for each unit charge at distance 1
    assert t.q(2, 0) == pytest.approx(-1.0)


def test_solid_harmonics_addition_theorem():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 3))
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    Ca, Cb = solid_harmonics(4, a[None])[0], solid_harmonics(4, b[None])[0]
    c = a @ b
    legendre = [1, c, (3 * c * c - 1) / 2, (5 * c**3 - 3 * c) / 2, (35 * c**4 - 30 * c * c + 3) / 8]
    for l in range(5):
        sl = slice(l * l, (l + 1) ** 2)
        assert Ca[sl] @ Cb[sl] == pytest.approx(legendre[l], abs=1e-13)


@given(st.lists(st.floats(-0.4, 0.4), min_size=3, max_size=3))
def test_dipole_translation_invariance(shift):
    rho = dipole_pair(0.3)
    moved = rho.translated(shift)
    assert np.allclose(multipole_moments(moved, 2).p, multipole_moments(rho, 2).p, atol=1e-12)


def test_multipole_tail_error_decay():
    rho = quadrupole_triple()
    t = multipole_moments(rho, 4)
    r = np.geomspace(3, 300, 12)
    pts = np.stack([r * 0.6, r * 0.8], -1)
    err = np.abs(charge_potential(rho, pts) - MultipoleTail(t).evaluate(pts))
    slope = np.polyfit(np.log(r), np.log(err), 1)[0]
    assert slope <= -(4 + 2) + 0.1


def test_multipole_tail_validity_region():
    t = multipole_moments(quadrupole_triple())
    with pytest.raises(OutsideValidity):
        multipole_tail_with_error(t, [1.0, 0.5])


def test_density_grid_moments():
    # uniform cube of charge centred at the origin: monopole only up to midpoint-rule symmetry
    vals = np.ones((5, 5, 5))
    d = DensityGrid([-0.4, -0.4, -0.4], [0.2, 0.2, 0.2], vals)
    rho = ChargeDistribution(density=d, support_radius=1.0)
    t = multipole_moments(rho, 2)
    assert t.e == pytest.approx(1.0)
    assert np.allclose(t.p, 0, atol=1e-14)


def test_json_round_trip():
    rho = quadrupole_triple(0.5)
    back = charge_distribution_from_json(charge_distribution_to_json(rho))
    assert np.array_equal(back.positions, rho.positions) and np.array_equal(back.charges, rho.charges)


def test_empty_distribution():
    with pytest.raises(EmptyDistribution):
        multipole_moments(ChargeDistribution())


def test_classification():
    assert classify_charge(dipole_pair()).reason == "Dipole"
    q = classify_charge(quadrupole_triple())
    assert q.kind == "Finite" and q.leading_order == 2
    assert classify_charge(ChargeDistribution()).kind == "Zero"
    mono = ChargeDistribution([[0.2, 0, 0]], [1.0], support_radius=1.0)
    assert classify_charge(mono).reason == "Monopole"


def test_classification_ambiguity_band():
    # dipole 5e-9 against a zero tolerance of 1e-10 * TV * R = 6e-10
    pos = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 0, 0], [5e-9, 0, 0]])
    rho = ChargeDistribution(pos, [1.0, 1.0, -3.0, 1.0], support_radius=1.0)
    with pytest.raises(ToleranceAmbiguous):
        classify_charge(rho)


@given(st.floats(0, 2 * math.pi))
def test_classification_rotation_invariant(a):
    R = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
    rho = quadrupole_triple()
    rot = ChargeDistribution(rho.positions @ R.T, rho.charges, support_radius=1.0)
    assert classify_charge(rot).kind == "Finite"


def test_tail_bound_quadrupole():
    rho = quadrupole_triple()
    t = multipole_moments(rho)
    rep = tail_bound_check(t, np.geomspace(4, 4000, 24), rho)
    assert rep.holds and rep.order == 2
    assert rep.C_l == pytest.approx(0.191434, rel=1e-5)
    assert rep.decay_exponent == pytest.approx(-3.0, abs=0.05)


def test_tail_bound_monopole_rejected():
    rho = ChargeDistribution([[0, 0, 0]], [1.0], support_radius=1.0)
    with pytest.raises(PreconditionViolated):
        tail_bound_check(multipole_moments(rho), np.geomspace(4, 40, 8))


def test_tail_bound_all_moments_zero():
    # eight alternating charges on a cube have vanishing moments up to l = 2
    pos = np.array([[i, j, k] for i in (-0.5, 0.5) for j in (-0.5, 0.5) for k in (-0.5, 0.5)])
    charges = np.prod(np.sign(pos), axis=1)
    rho = ChargeDistribution(pos, charges, support_radius=1.0)
    t = multipole_moments(rho, 2)
    assert t.leading_order is None
    assert tail_bound_check(t, np.geomspace(4, 400, 10), rho).holds
