import json
from itertools import combinations, product

import pytest
from hypothesis import given, settings, strategies as st

from diagline.core import (
    FLAGSHIP, T0_TABLE, BasePoint, BudgetError, DiagonalForm, InstanceError,
    build_line_system, dump_instance, flagship, instance_digest, line_identity_check,
    line_polynomial, load_instance, parse_instance, relaxed_line_system, t0_bound,
    vanishing_subsum_scan, verify_base_point,
)

FORM3 = DiagonalForm(3, (1, 1, 1, -1, -1, -1), 7)
FORM2 = DiagonalForm(2, (1, 1, 1, -1, -1, -1), -3)
Y2 = (1, 1, 1, 1, 1, 2)


def test_verify_base_point_examples():
    assert verify_base_point(FORM3, (2, 1, 1, 1, 1, 1))
    assert not verify_base_point(FORM3, (2, 0, 1, 1, 1, 1))
    with pytest.raises(InstanceError):
        DiagonalForm(1, (1, -1), 0)


def test_verify_base_point_dimension_mismatch():
    with pytest.raises(InstanceError):
        verify_base_point(FORM3, (2, 1, 1))


def test_form_invariants():
    with pytest.raises(InstanceError):
        DiagonalForm(0, (1,), 1)
    with pytest.raises(InstanceError):
        DiagonalForm(2, (1, 0), 1)
    with pytest.raises(InstanceError):
        DiagonalForm(2, (), 1)
    assert FORM3.mixed_sign
    assert not DiagonalForm(2, (1, 2), 3).mixed_sign
    with pytest.raises(InstanceError):
        BasePoint((1, 0))


def test_build_line_system_k2_rows():
    ls = build_line_system(FORM2, Y2)
    assert ls.row(1) == (1, 1, 1, -1, -1, -2)
    assert ls.row(2) == (1, 1, 1, -1, -1, -1)
    assert ls.c0 == 3
    assert ls.strict


def test_build_refuses_n_zero_pairs():
    # sum c_i y_i^k = 0 here, so no valid form carries this base point
    with pytest.raises(InstanceError):
        build_line_system(DiagonalForm(2, (1, 1, -2), 1), (1, 1, 1))
    ls = relaxed_line_system(2, (1, 1, -2), (1, 1, 1))
    assert ls.A == ((1, 1, -2), (1, 1, -2))
    assert ls.c0 == 0
    assert not ls.strict


def test_build_refuses_unverified_base_point():
    with pytest.raises(InstanceError):
        build_line_system(FORM3, (1, 1, 1, 1, 1, 1))


def test_big_coefficients_stay_exact():
    y = (10**12, 1)
    c = (1, -1)
    form = DiagonalForm(3, c, 10**36 - 1)
    ls = build_line_system(form, y)
    assert ls.row(1)[0] == 10**24
    assert ls.c0 == -(10**36 - 1)


def test_line_identity_examples():
    assert line_identity_check(FORM2, Y2, (0,) * 6)
    assert line_identity_check(DiagonalForm(1, (1, -1), 2), (3, 1), (5, 5))
    assert not line_identity_check(FORM2, Y2, (1, 0, 0, 0, 0, 0))


def test_line_polynomial_coefficients_are_binomial_multiples():
    z = (1, -1, 2, 0, 1, 1)
    coeffs = line_polynomial(FORM2, Y2, z)
    ls = build_line_system(FORM2, Y2)
    assert coeffs[0] == 0
    assert coeffs[1] == 2 * ls.evaluate(z)[0]
    assert coeffs[2] == ls.evaluate(z)[1]


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=6, max_size=6))
def test_identity_iff_rows_annihilate(z):
    ls = build_line_system(FORM2, Y2)
    assert line_identity_check(FORM2, Y2, z) == ls.annihilates(z)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.lists(st.integers(-5, 5).filter(bool), min_size=1, max_size=6),
       st.data())
def test_first_and_last_rows(k, c, data):
    y = data.draw(st.lists(st.integers(-4, 4).filter(bool), min_size=len(c), max_size=len(c)))
    ls = relaxed_line_system(k, c, y)
    assert ls.row(k) == tuple(c)
    assert ls.row(1) == tuple(ci * yi ** (k - 1) for ci, yi in zip(c, y))
    assert all(a != 0 for row in ls.A for a in row)


@settings(max_examples=60, deadline=None)
@given(st.permutations(range(6)))
def test_verify_base_point_permutation_invariant(perm):
    y = (2, 1, 1, 1, 1, 1)
    form = DiagonalForm(3, tuple(FORM3.c[p] for p in perm), 7)
    assert verify_base_point(form, tuple(y[p] for p in perm))


def _brute_subsums(c, y, k):
    w = [ci * yi**k for ci, yi in zip(c, y)]
    out = []
    for r in range(1, len(c) + 1):
        for S in combinations(range(len(c)), r):
            if sum(w[i] for i in S) == 0:
                out.append(frozenset(S))
    return sorted(out, key=lambda S: (len(S), sorted(S)))


def test_subsum_scan_examples():
    found = vanishing_subsum_scan(FORM3, (1,) * 6)
    assert frozenset({0, 3}) in found
    assert vanishing_subsum_scan([5], (2,), k=3) == []


def test_subsum_scan_flagship_matches_brute_force():
    ls = flagship()
    found = vanishing_subsum_scan(ls.c, ls.y, k=3)
    assert found == _brute_subsums(ls.c, ls.y, 3)
    # index 0 carries weight 8; it can only vanish against eight -1 terms, and six exist
    assert all(0 not in S for S in found)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-3, 3).filter(bool), min_size=1, max_size=9), st.integers(1, 3), st.data())
def test_subsum_scan_matches_brute_force(c, k, data):
    y = data.draw(st.lists(st.integers(-2, 2).filter(bool), min_size=len(c), max_size=len(c)))
    assert vanishing_subsum_scan(c, y, k=k) == _brute_subsums(c, y, k)


def test_subsum_closure_under_differences():
    c = (1, 1, -1, -1, 2, -2)
    found = set(vanishing_subsum_scan(c, (1,) * 6, k=2))
    for S in found:
        for T in found:
            if S < T:
                assert T - S in found


def test_subsum_scan_budget():
    with pytest.raises(BudgetError):
        vanishing_subsum_scan([1] * 29, [1] * 29, k=1)


def test_reference_table():
    assert len(T0_TABLE) == 14
    assert list(T0_TABLE) == list(range(2, 16))
    assert t0_bound(3) == 7 and t0_bound(15) == 97
    with pytest.raises(KeyError):
        t0_bound(16)
    with pytest.raises(TypeError):
        T0_TABLE[3] = 8


def test_parse_instance_roundtrip(tmp_path):
    ls = flagship()
    doc = json.loads(dump_instance(ls))
    assert doc == FLAGSHIP
    path = tmp_path / "inst.json"
    path.write_text(dump_instance(ls))
    again = load_instance(path)
    assert again == ls
    assert again.digest() == instance_digest(FLAGSHIP)


def test_parse_instance_rejects_floats_and_mismatch():
    with pytest.raises(InstanceError):
        parse_instance({"k": 2, "c": [1.0, -1], "y": [1, 1]})
    with pytest.raises(InstanceError):
        parse_instance({"k": 2, "s": 3, "c": [1, -1], "y": [1, 1]})
    with pytest.raises(InstanceError):
        parse_instance({"k": 2, "c": [1, -1], "y": [1]})
    with pytest.raises(InstanceError):
        parse_instance({"c": [1, -1]})


def test_relaxed_when_n_absent():
    ls = parse_instance({"k": 1, "c": [1, -1], "y": [1, 1]})
    assert not ls.strict and ls.c0 == 0


def test_permuted_system():
    ls = flagship()
    perm = list(range(11, -1, -1))
    p = ls.permuted(perm)
    assert p.c == tuple(ls.c[i] for i in perm)
    assert p.column(11) == ls.column(0)


def test_evaluate_exhaustive_small():
    ls = relaxed_line_system(2, (1, 1, -2))
    sols = [z for z in product(range(-1, 2), repeat=3) if ls.annihilates(z)]
    assert sols == [(-1, -1, -1), (0, 0, 0), (1, 1, 1)]
