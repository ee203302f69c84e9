import numpy as np
import pytest

from starklap.operators import GridSpec
from starklap.potential import (
    FAMILIES,
    PotentialValidationError,
    eval_potential,
    make_potential,
    validate_conditions,
)

GRIDS = [GridSpec(2, ((-40.0, 60.0), (-40.0, 40.0)), 1.0), GridSpec(2, ((-12.0, 30.0), (-12.0, 12.0)), 0.4)]


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("grid", GRIDS, ids=["wide", "narrow"])
def test_builtins_meet_declared_constants(family, grid):
    spec = make_potential(family)
    rep = validate_conditions(spec, grid)
    assert rep.passed, rep.flags


def test_zero_family_is_zero(small_grid):
    spec = make_potential("zero")
    assert spec.is_zero
    comps = eval_potential(spec, small_grid.flat_coords())
    assert np.all(comps.total == 0.0)


def test_bump_is_compact():
    spec = make_potential("bump", c=2.0, center=(5.0, 0.0), radius=1.5)
    p = np.array([[5.0, 6.6, 5.0, 0.0], [0.0, 0.0, 1.4, 0.0]])
    q = eval_potential(spec, p).q3
    assert q[0] == pytest.approx(2.0 * np.exp(-1.0))
    assert q[1] == 0.0 and q[3] == 0.0
    assert q[2] > 0.0


def test_long_range_gradient_by_differences():
    spec = make_potential("long_range", c=0.7)
    p = np.array([[12.0, 30.0, -5.0], [3.0, -9.0, 20.0]])
    comps = eval_potential(spec, p)
    eta = 1e-6
    for j in range(2):
        e = np.zeros((2, 1))
        e[j] = eta
        fd = (eval_potential(spec, p + e).q1 - eval_potential(spec, p - e).q1) / (2 * eta)
        np.testing.assert_allclose(comps.grad_q1[j], fd, rtol=1e-6, atol=1e-10)


def test_understated_constant_fails():
    spec = make_potential("short_range", c=3.0)
    from dataclasses import replace

    rep = validate_conditions(replace(spec, C_decl=0.5), GRIDS[0])
    assert not rep.passed
    assert not rep.flags["C2"]


def test_nonfinite_potential_is_rejected():
    from dataclasses import replace

    spec = make_potential("short_range")
    bad = replace(spec, q2=lambda p: np.full(p.shape[1:], np.nan))
    with pytest.raises(PotentialValidationError):
        validate_conditions(bad, GRIDS[1])


def test_unknown_family():
    with pytest.raises(ValueError):
        make_potential("coulomb")
