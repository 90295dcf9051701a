from __future__ import annotations

import cmath
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spt_mbqc.cohomology import (
    Cocycle3,
    CohomologyError,
    PhaseExponent,
    TwoCochain,
    check_cochain_condition,
    check_cocycle_condition,
    check_homogeneity,
    class_invariant,
    coboundary,
    cochain_to_cocycle,
    cocycle_to_cochain,
    standard_cocycle,
    trivial_cocycle,
)
from spt_mbqc.groups import FiniteGroup, GroupSpec


def G(d):
    return FiniteGroup(GroupSpec((d,)))


def omega_direct(d, c, g1, g2, g3):
    """Independent evaluation of the standard family as a complex number."""
    carry = g2 + g3 - (g2 + g3) % d
    return cmath.exp(2j * cmath.pi * c * g1 * carry / d**2)


# -- phases ------------------------------------------------------------------


def test_phase_exponent_arithmetic():
    a = PhaseExponent(1, 4)
    assert a * a == PhaseExponent(1, 2)
    assert (a * PhaseExponent(1, 3)).fraction == PhaseExponent(7, 12).fraction
    assert (a / a).is_one()
    assert a**4 == PhaseExponent.one()
    assert PhaseExponent(-1, 4).num == 3
    assert PhaseExponent(2, 4).to_json() == {"num": 1, "order": 2}
    with pytest.raises(CohomologyError):
        PhaseExponent(1, 0)


@given(st.integers(-50, 50), st.integers(1, 20), st.integers(-50, 50), st.integers(1, 20))
def test_phase_multiplication_is_exact(n1, o1, n2, o2):
    a, b = PhaseExponent(n1, o1), PhaseExponent(n2, o2)
    assert abs(complex(a * b) - complex(a) * complex(b)) < 1e-12
    assert (a * b) / b == a


# -- standard cocycle ----------------------------------------------------------


def test_standard_cocycle_examples():
    w = standard_cocycle(G(2), 1)
    assert w.order == 4
    assert w(1, 1, 1) == PhaseExponent(2, 4)
    assert complex(w(1, 1, 1)) == pytest.approx(-1)
    assert w(0, 1, 1).is_one()
    w3 = standard_cocycle(G(3), 1)
    assert w3(1, 1, 2) == PhaseExponent(3, 9)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_standard_cocycle_matches_direct_formula(d):
    for c in range(d):
        w = standard_cocycle(G(d), c)
        for g in itertools.product(range(d), repeat=3):
            assert abs(complex(w(*g)) - omega_direct(d, c, *g)) < 1e-12


def test_standard_cocycle_range_and_arity():
    with pytest.raises(CohomologyError):
        standard_cocycle(G(2), 2)
    with pytest.raises(CohomologyError):
        standard_cocycle(G(3), -1)
    with pytest.raises(CohomologyError):
        standard_cocycle(FiniteGroup(GroupSpec((2, 2))), 1)
    w = standard_cocycle(FiniteGroup(GroupSpec((2, 2))), (1, 0))
    assert check_cocycle_condition(w).passed


@pytest.mark.parametrize("d,c", [(2, 0), (2, 1), (3, 0), (3, 1), (3, 2), (4, 1), (4, 3), (5, 2), (6, 5)])
def test_cocycle_condition_passes(d, c):
    rep = check_cocycle_condition(standard_cocycle(G(d), c))
    assert rep.passed and rep.checked == d**4


def test_cocycle_condition_witness_z2():
    w = standard_cocycle(G(2), 1)
    # (1,1,1,1): w(1,1,1) w(1,0,1) w(1,1,1) / (w(0,1,1) w(1,1,0)) = (-1)(1)(-1)/1
    prod = w(1, 1, 1) * w(1, 0, 1) * w(1, 1, 1) / (w(0, 1, 1) * w(1, 1, 0))
    assert prod.is_one()


def test_perturbed_table_fails_with_named_tuple():
    w = standard_cocycle(G(3), 1).perturbed(1, 2, 1)
    rep = check_cocycle_condition(w)
    assert not rep.passed
    assert rep.violation is not None and len(rep.violation) == 4
    assert 1 in rep.violation
    assert rep.to_json()["violation"] == list(rep.violation)


# -- cochains -------------------------------------------------------------------


def test_cochain_examples():
    nu = cocycle_to_cochain(standard_cocycle(G(2), 1))
    assert complex(nu(0, 1, 0, 1)) == pytest.approx(-1)
    assert nu(0, 1, 1, 0).is_one()
    for g in range(2):
        assert nu(g, g, g, g).is_one()


@pytest.mark.parametrize("d", [2, 3, 4])
def test_cochain_roundtrip_and_conditions(d):
    for c in range(d):
        w = standard_cocycle(G(d), c)
        nu = cocycle_to_cochain(w)
        assert check_homogeneity(nu).passed
        assert check_cochain_condition(nu).passed
        assert np.array_equal(cochain_to_cocycle(nu).table, w.table)


def test_inhomogeneous_table_is_caught():
    nu = cocycle_to_cochain(standard_cocycle(G(2), 1))
    table = nu.table.copy()
    table[0, 1, 0, 1] += 1
    from spt_mbqc.cohomology import Cochain3

    assert not check_homogeneity(Cochain3(nu.group, nu.order, table)).passed


# -- coboundaries and the class invariant ----------------------------------------


def test_trivial_coboundary():
    mu = TwoCochain(G(3), 9, np.zeros((3, 3), dtype=int))
    assert not coboundary(mu).table.any()


def test_random_coboundary_is_cocycle_z2():
    rng = np.random.default_rng(0)
    for _ in range(10):
        lam = coboundary(TwoCochain.random(G(2), 4, rng))
        assert check_cochain_condition(lam).passed
        assert check_homogeneity(lam).passed
        assert class_invariant(cochain_to_cocycle(lam)).is_one()


def test_class_invariant_examples():
    assert class_invariant(standard_cocycle(G(2), 1)) == PhaseExponent(1, 2)
    assert class_invariant(standard_cocycle(G(3), 0)).is_one()
    assert class_invariant(trivial_cocycle(G(4))).is_one()
    assert class_invariant(standard_cocycle(G(3), 1)) == PhaseExponent(1, 3)
    with pytest.raises(CohomologyError):
        class_invariant(standard_cocycle(G(4), 1), 2)
    with pytest.raises(CohomologyError):
        class_invariant(standard_cocycle(FiniteGroup(GroupSpec((2, 2))), (1, 1)))


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_class_invariant_equals_c_over_d(d):
    seen = set()
    for c in range(d):
        inv = class_invariant(standard_cocycle(G(d), c))
        assert inv == PhaseExponent(c, d)
        seen.add(inv)
    assert len(seen) == d


@pytest.mark.parametrize("d,c", [(2, 1), (3, 1), (3, 2)])
@given(seed=st.integers(0, 2**32 - 1))
def test_class_invariant_is_coboundary_invariant(d, c, seed):
    rng = np.random.default_rng(seed)
    w = standard_cocycle(G(d), c)
    lam = cochain_to_cocycle(coboundary(TwoCochain.random(G(d), d * d, rng)))
    twisted = w * lam
    assert check_cocycle_condition(twisted).passed
    assert class_invariant(twisted) == class_invariant(w)
    # any generator gives a class function
    for g in range(1, d):
        if np.gcd(g, d) == 1:
            assert class_invariant(twisted, g) == class_invariant(w, g)


def test_cocycle_table_shape_checked():
    with pytest.raises(CohomologyError):
        Cocycle3(G(2), 4, np.zeros((2, 2)))
