import math

import numpy as np
import pytest
from scipy.integrate import quad

from starklap.cli import wkb_tail_report
from starklap.operators import GridSpec
from starklap.phase import PhaseParams
from starklap.potential import make_potential
from starklap.verify import (
    SupportError,
    barchi_weight,
    commutator_identity_check,
    commutator_terms,
    default_xi,
    factorization_check,
    factorization_terms,
    fit_order,
    lap_weight,
    random_test_fields,
    relative_residual,
    wkb_annihilation_check,
    wkb_state,
    zero_weight,
)
from starklap.verify import test_field as bump_field

GRID = GridSpec(2, ((2.0, 30.0), (-12.0, 12.0)), 0.4)


def test_fit_order_exact_power_law():
    hs = [0.4, 0.2, 0.1, 0.05]
    slope, r2 = fit_order(hs, [3.0 * h**2 for h in hs])
    assert slope == pytest.approx(2.0) and r2 == pytest.approx(1.0)


def test_relative_residual_floor():
    assert relative_residual(0.0, 0.0) == 0.0
    assert relative_residual(1.0, 1.0) == 0.0
    assert relative_residual(1e-30, -1e-30, scale=1.0) < 1.0


def test_zero_weight_gives_zero_terms():
    psi = bump_field((14.0, 0.0), 4.0, (0.3, 0.1))(GRID.flat_coords())
    lhs, terms = commutator_terms(GRID, make_potential("mixed"), zero_weight(), psi)
    assert lhs == 0
    assert all(v == 0 for v in terms.values())


def test_field_outside_weight_support_gives_zero():
    # f < 2^m = 8 on the whole support, so barchi_m and every derivative vanish there
    psi = bump_field((6.0, 0.0), 2.0, (0.5, 0.0))(GRID.flat_coords())
    assert np.all(np.sqrt(np.hypot(*GRID.flat_coords()) + GRID.flat_coords()[0])[psi != 0] < 8.0)
    lhs, terms = commutator_terms(GRID, None, barchi_weight(3), psi)
    assert abs(lhs) < 1e-14
    assert all(abs(v) < 1e-14 for v in terms.values())


def test_commutator_sides_are_real():
    # the discrete A is symmetric only up to O(h^2), so imaginary parts must shrink at that rate
    spec = make_potential("mixed")
    fn = bump_field((16.0, 1.0), 5.0, (0.4, -0.2))
    ratios = []
    for h in (0.4, 0.2):
        g = GRID.with_h(h)
        lhs, terms = commutator_terms(g, spec, lap_weight(2, 2, 0.5), fn(g.flat_coords()))
        rhs = complex(sum(terms.values()))
        assert isinstance(terms["p f^-1 Theta ell p"], float)
        ratios.append((abs(lhs.imag) / abs(lhs), abs(rhs.imag) / abs(rhs)))
    assert ratios[1][0] < ratios[0][0] / 3
    assert ratios[1][1] < ratios[0][1] / 3


def test_weight_must_avoid_bump_support():
    spec = make_potential("bump", center=(20.0, 0.0), radius=2.0)
    psi = bump_field((16.0, 0.0), 4.0)(GRID.flat_coords())
    with pytest.raises(SupportError):
        commutator_terms(GRID, spec, barchi_weight(1), psi)
    with pytest.raises(SupportError):
        commutator_terms(GRID, None, barchi_weight(0), psi)


def test_commutator_identity_converges():
    fields = random_test_fields(3, (8.0, -8.0), (24.0, 8.0), 5.0, 1.0, seed=0)
    rep = commutator_identity_check(GRID, make_potential("mixed"), barchi_weight(2), fields, (0.4, 0.2, 0.1))
    assert rep.reliable
    assert rep.convergence_order >= 2 - 0.3
    assert rep.residual[-1] < rep.residual[0]


def test_factorization_converges_and_needs_q6():
    grid = GridSpec(2, ((2.0, 60.0), (-20.0, 20.0)), 0.4)
    spec = make_potential("mixed", c2=4.0)
    params = PhaseParams(complex(0.0, 0.5), 0)
    fields = random_test_fields(2, (36.0, -8.0), (52.0, 8.0), 8.0, 0.4, seed=1)
    rep = factorization_check(grid, spec, params, 2, fields, (0.4, 0.2, 0.1))
    assert rep.reliable and rep.convergence_order >= 1.7
    abl = factorization_check(grid, spec, params, 2, fields, (0.4,), include_q6=False)
    assert abl.residual[0] >= 10 * rep.residual[0]


def test_factorization_support_rules():
    psi = bump_field((20.0, 0.0), 3.0)(GRID.flat_coords())
    with pytest.raises(SupportError):
        factorization_terms(GRID, None, PhaseParams(1j, 2), 3, psi)
    with pytest.raises(SupportError):
        factorization_terms(GRID, None, PhaseParams(1j, 0), 3, psi)


def test_wkb_zero_profile_is_zero():
    grid = GridSpec(2, ((-2.0, 20.0), (-10.0, 10.0)), 0.25)
    u = wkb_state(grid, lambda g: np.zeros(np.atleast_2d(g).shape[1:]))
    assert np.all(u == 0)


def test_wkb_support_guard():
    grid = GridSpec(2, ((-2.0, 10.0), (-6.0, 6.0)), 0.25)
    with pytest.raises(SupportError):
        wkb_state(grid)


def test_wkb_annihilated_at_expected_order():
    grid = GridSpec(2, ((-2.0, 16.0), (-9.0, 9.0)), 0.1)
    rep = wkb_annihilation_check(grid, hs=(0.1, 0.05, 0.025))
    assert rep.reliable
    assert rep.convergence_order >= 2 - 0.2


def test_wkb_tail_matches_profile_norm():
    # in parabolic coordinates dx dy = 2 r df dg, so each shell tail is sqrt(2) ||xi||
    xi = default_xi()
    norm_sq = quad(lambda g: float(xi(np.array([[g]]))[0]) ** 2, -xi.g_max, xi.g_max)[0]
    expected = math.sqrt(2.0 * norm_sq)
    rep = wkb_tail_report(0.5)
    for n in (1, 2, 3, 4):
        assert rep.tail[n] == pytest.approx(expected, rel=0.03)
