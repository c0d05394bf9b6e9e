"""f-tables, optimal U-tables, rate construction, and the assumption checks.

Expected rate rows come from an independent brute-force enumeration oracle
computed before this module existed; they are asserted exactly.
"""

import numpy as np
import pytest

from boundchain import (BoundingChain, StabilizationError, ValidationError,
                        build_bounding_chain, check_optimality,
                        check_u_membership, compute_f, optimal_U, phi,
                        phi_inverse, verify_assumptions)
from boundchain.builder import UTable

UPPER211 = {
    0: {2: 2.5}, 1: {-1: 2.5, 2: 3.5}, 2: {-1: 2.5, 2: 4.5},
    3: {-1: 5.5, 2: 5.5}, 4: {-1: 8.5, 2: 6.5}, 5: {-1: 11.5, 2: 7.5},
    6: {-1: 14.5, 2: 8.5}, 7: {-1: 17.5, 2: 9.5}, 8: {-1: 20.0, 2: 10.5},
    9: {-1: 22.5, 2: 11.5}, 10: {-1: 25.0, 2: 12.5},
    11: {-1: 27.5, 2: 13.5}, 12: {-1: 30.0, 2: 14.5},
    50: {-1: 125.0, 2: 52.5}, 60: {-1: 150.0, 2: 62.5},
}

LOWER225 = {
    0: {2: 2.5}, 1: {-1: 3.0, 3: 2.5}, 2: {-2: 3.0, 2: 2.5},
    3: {-3: 3.0, -1: 2.0, 2: 1.0, 3: 3.5},
    4: {-4: 3.0, -2: 2.0, 1: 1.0, 2: 3.5},
    5: {-5: 3.0, -1: 4.5, 2: 3.5},
    6: {-4: 3.0, -2: 4.5, 1: 2.0, 2: 3.5},
    7: {-5: 3.0, -2: 3.0, -1: 4.0, 2: 3.5},
    8: {-4: 3.0, -3: 3.0, -2: 4.0, 1: 1.0, 2: 5.5},
    9: {-5: 3.0, -4: 3.0, -2: 2.0, -1: 4.5, 1: 1.0, 2: 4.5},
    10: {-5: 6.0, -2: 6.5, 2: 4.5},
    11: {-5: 3.0, -4: 3.0, -2: 4.5, -1: 4.5, 1: 2.0, 2: 4.5},
    12: {-5: 6.0, -2: 9.0, 2: 4.5},
    13: {-5: 3.0, -4: 3.0, -3: 3.0, -2: 4.0, -1: 4.5, 1: 1.0, 2: 6.5},
    14: {-5: 6.0, -4: 3.0, -2: 8.5, 1: 1.0, 2: 5.5},
    15: {-5: 9.0, -2: 6.5, -1: 4.5, 2: 5.5},
    16: {-5: 6.0, -4: 3.0, -2: 11.0, 1: 2.0, 2: 5.5},
    17: {-5: 9.0, -2: 9.0, -1: 4.5, 2: 5.5},
    18: {-5: 6.0, -4: 3.0, -3: 3.0, -2: 10.5, 1: 1.0, 2: 7.5},
    19: {-5: 9.0, -4: 3.0, -2: 8.5, -1: 4.5, 1: 1.0, 2: 6.5},
    20: {-5: 12.0, -2: 13.0, 2: 6.5},
    21: {-5: 9.0, -4: 3.0, -2: 11.0, -1: 4.5, 1: 2.0, 2: 6.5},
    22: {-5: 12.0, -2: 15.5, 2: 6.5},
    23: {-5: 9.0, -4: 3.0, -3: 3.0, -2: 10.5, -1: 4.5, 1: 1.0, 2: 8.5},
    24: {-5: 12.0, -4: 3.0, -2: 15.0, 1: 1.0, 2: 7.5},
    25: {-5: 15.0, -2: 13.0, -1: 4.5, 2: 7.5},
    100: {-5: 60.0, -2: 65.0, 2: 22.5},
    101: {-5: 57.0, -4: 3.0, -2: 63.0, -1: 4.5, 1: 2.0, 2: 22.5},
    102: {-5: 60.0, -2: 67.5, 2: 22.5},
    103: {-5: 57.0, -4: 3.0, -3: 3.0, -2: 62.5, -1: 4.5, 1: 1.0, 2: 24.5},
    104: {-5: 60.0, -4: 3.0, -2: 67.0, 1: 1.0, 2: 23.5},
    105: {-5: 63.0, -2: 65.0, -1: 4.5, 2: 23.5},
}

NAIVE111 = {
    0: {1: 2.5}, 1: {-1: 2.5, 1: 3.5}, 2: {-1: 5.0, 1: 7.5},
    3: {-1: 7.5, 1: 17.5}, 4: {-1: 10.0, 1: 32.5}, 5: {-1: 12.5, 1: 52.5},
    6: {-1: 15.0, 1: 77.5}, 7: {-1: 17.5, 1: 107.5}, 8: {-1: 20.0, 1: 142.5},
    9: {-1: 22.5, 1: 182.5}, 10: {-1: 25.0, 1: 227.5},
    11: {-1: 27.5, 1: 277.5}, 12: {-1: 30.0, 1: 332.5},
}

# rows produced purely by the empty-class fill rule (the (2,2,5) partition
# has no states in classes 1 and 3)
UPPER225 = {
    0: {2: 2.5}, 1: {-1: 2.5, 1: 2.5}, 2: {-2: 2.5, 2: 3.5},
    3: {-3: 2.5, -1: 2.5, 1: 3.5}, 4: {-2: 5.0, 2: 7.5},
    5: {-3: 3.0, 1: 4.0, 2: 3.5}, 6: {-2: 3.0, -1: 4.5, 2: 17.5},
    7: {-3: 3.0, -2: 2.5, 1: 13.0, 2: 4.5}, 8: {-2: 5.5, -1: 4.5, 2: 32.5},
    9: {-3: 3.0, -2: 5.0, 1: 24.0, 2: 8.5}, 10: {-2: 6.0, 2: 52.5},
    11: {-3: 3.0, -2: 3.0, -1: 4.5, 1: 34.0, 2: 18.5},
}


def nz_row(chain, ell):
    return {k: r for k, r in ((k, chain.rate(ell, k)) for k in chain.offsets)
            if r != 0.0}


def assert_rows(chain, table, exact=True):
    for ell, want in table.items():
        got = nz_row(chain, ell)
        assert set(got) == set(want), f"offsets differ at class {ell}: {got}"
        for k, rate in want.items():
            if exact and ell <= chain.l_exact:
                assert got[k] == rate, f"rate ({ell},{k}): {got[k]} != {rate}"
            else:
                assert got[k] == pytest.approx(rate, rel=1e-10)


def test_upper_211_rows(upper211):
    assert_rows(upper211, UPPER211)


def test_upper_211_tails(upper211):
    down = upper211.tails[-1]
    up = upper211.tails[2]
    assert (down.period, down.slope, down.intercepts) == (1, 2.5, (0.0,))
    assert down.onset == 7
    assert (up.period, up.slope, up.intercepts) == (1, 1.0, (2.5,))
    assert upper211.rate(157, -1) == pytest.approx(392.5, rel=1e-12)
    assert upper211.rate(157, 2) == pytest.approx(159.5, rel=1e-12)
    assert upper211.diagonal(157) == pytest.approx(-552.0, rel=1e-12)


def test_lower_225_rows(lower225):
    assert_rows(lower225, LOWER225, exact=False)


def test_lower_225_tails(lower225):
    t = lower225.tails
    assert (t[-5].period, t[-5].onset) == (5, 4)
    assert t[-5].slope == pytest.approx(0.6, rel=1e-12)
    assert t[-5].intercepts == pytest.approx((0.0, -3.6, -1.2, -4.8, -2.4),
                                             rel=1e-10, abs=1e-9)
    assert (t[-4].period, t[-4].slope) == (5, 0.0)
    assert t[-4].intercepts == pytest.approx((0.0, 3.0, 0.0, 3.0, 3.0), abs=1e-9)
    assert (t[-3].period, t[-3].slope) == (5, 0.0)
    assert t[-3].intercepts == pytest.approx((0.0, 0.0, 0.0, 3.0, 0.0), abs=1e-9)
    assert t[-2].period == 10
    assert t[-2].slope == pytest.approx(0.65, rel=1e-10)
    assert (t[-1].period, t[-1].slope) == (2, 0.0)
    assert t[-1].intercepts == pytest.approx((0.0, 4.5), abs=1e-9)
    assert (t[1].period, t[1].slope) == (5, 0.0)
    assert t[1].intercepts == pytest.approx((0.0, 2.0, 0.0, 1.0, 1.0), abs=1e-9)
    assert t[2].period == 5
    assert t[2].slope == pytest.approx(0.2, rel=1e-10)
    assert t[2].intercepts == pytest.approx((2.5, 2.3, 2.1, 3.9, 2.7),
                                            rel=1e-10, abs=1e-9)


def test_naive_111_rows(naive111):
    assert_rows(naive111, NAIVE111)
    up = naive111.tails[1]
    assert up.degree == 2
    # quadratic alpha l^2 - alpha l + b2 beyond the head
    assert naive111.rate(300, 1) == pytest.approx(2.5 * 300**2 - 2.5 * 300 + 2.5,
                                                  rel=1e-9)
    assert naive111.rate(300, -1) == pytest.approx(750.0, rel=1e-10)


def test_upper_225_fill_rows(network, part225):
    f = compute_f(network, part225, "upper", l_exact=40 + 5)
    skel = phi_inverse(optimal_U(f), part225.weights)
    assert_rows(skel, UPPER225)


def test_f_values(network, part211):
    f = compute_f(network, part211, "upper", l_exact=110)
    # up-tail from one step above the class: b1*l + b2
    assert f.f_plus(10, 11) == 12.5
    # mass dropping two or more classes can vanish (x1 = 0 states)
    for ell in range(2, 40):
        assert f.f_minus(ell, ell - 2) == 0.0
    # the one-step-down prefix at large classes: min over the class is
    # min(d2, d3) * l once the beta term dominates the candidates
    assert f.f_minus(100, 99) == 250.0
    # beyond the band the aggregates are constant and the accessors clamp
    assert f.f_minus(30, 5) == 0.0


def test_compute_f_precondition(network, part225):
    with pytest.raises(ValidationError):
        compute_f(network, part225, "upper", l_exact=2 * 5 + 1)


def test_u_membership_flags_violations(network, part211):
    f = compute_f(network, part211, "upper", l_exact=30)
    U = optimal_U(f)
    assert check_u_membership(U) == []
    bad = UTable(U.direction, U.j_max, U.l_exact, U.minus.copy(),
                 U.plus.copy())
    bad.minus[1, 20] = bad.minus[2, 20] - 1.0  # breaks nondecreasing prefixes
    kinds = {v[0] for v in check_u_membership(bad)}
    assert "minus" in kinds
    bad2 = UTable(U.direction, U.j_max, U.l_exact, U.minus.copy(),
                  U.plus.copy())
    bad2.plus[U.j_max + 1, 10] = 0.5  # mass beyond the band
    assert any(v[0] == "plus" for v in check_u_membership(bad2))
    with pytest.raises(ValidationError):
        phi_inverse(bad)


def test_phi_inverse_toy_row():
    # one populated row: cumulative-in = (1, 3), cumulative-out = (4, 1, 0)
    minus = np.zeros((4, 3))
    plus = np.zeros((4, 3))
    minus[1, 2], minus[2, 2] = 3.0, 1.0
    plus[1, 2], plus[2, 2] = 4.0, 1.0
    chain = phi_inverse(UTable("upper", 2, 2, minus, plus))
    assert nz_row(chain, 2) == {-2: 1.0, -1: 2.0, 1: 3.0, 2: 1.0}
    assert chain.diagonal(2) == -7.0


def test_phi_inverse_zero_table():
    chain = phi_inverse(UTable("upper", 2, 4, np.zeros((4, 5)), np.zeros((4, 5))))
    for ell in range(5):
        assert nz_row(chain, ell) == {}


def test_phi_roundtrip(upper211, lower225, network, part211):
    for chain in (upper211, lower225):
        U = phi(chain)
        back = phi_inverse(U, chain.weights)
        for ell in range(chain.l_exact + 1):
            got, want = back.row(ell), chain.row(ell)
            assert set(got) == set(want)
            for k in want:
                assert got[k] == pytest.approx(want[k], abs=1e-12, rel=1e-12)
    # and U -> chain -> U
    f = compute_f(network, part211, "upper", l_exact=30)
    U = optimal_U(f)
    U2 = phi(phi_inverse(U, part211.weights))
    assert np.allclose(U.minus, U2.minus, atol=1e-12)
    assert np.allclose(U.plus, U2.plus, atol=1e-12)


def test_rows_sum_to_zero_and_band(upper211, lower225):
    for chain in (upper211, lower225):
        for ell in range(0, chain.l_exact + 1):
            row = chain.row(ell)
            assert all(abs(k) <= chain.j_max for k in row)
            assert all(r >= 0 for r in row.values())
            total = sum(row.values()) + chain.diagonal(ell)
            assert abs(total) <= 1e-10 * max(1.0, abs(chain.diagonal(ell)))


def test_tail_matches_held_out_window(network, part211, part225):
    # tails fitted at a short horizon must reproduce exact enumeration
    # beyond it
    for part, direction in ((part211, "upper"), (part225, "lower")):
        short = build_bounding_chain(network, part, direction, l_exact=60)
        long = build_bounding_chain(network, part, direction, l_exact=90)
        for ell in range(61, 91):
            for k in long.offsets:
                assert short.rate(ell, k) == pytest.approx(
                    long.rate(ell, k), rel=1e-10, abs=1e-10)


def test_stabilization_reports_degree(network, part111):
    with pytest.raises(StabilizationError) as err:
        build_bounding_chain(network, part111, "upper", l_exact=40,
                             tail_degree=1)
    assert "degree 2" in str(err.value)


def test_verify_pass_and_perturbations(network, part211, upper211):
    assert verify_assumptions(network, part211, upper211, l_check=60).ok
    # reducing the up-2 rate at one class breaks domination right there
    exact = {k: v.copy() for k, v in upper211.exact.items()}
    exact[2][30] -= 1.0
    bad = BoundingChain("upper", upper211.j_max, upper211.l_exact,
                        upper211.l_total, exact, upper211.tails,
                        upper211.weights)
    rep = verify_assumptions(network, part211, bad, l_check=40)
    assert not rep.ok
    assert rep.counterexample["kind"] == "A1"
    assert (rep.counterexample["ell"], rep.counterexample["m"]) == (30, 31)


def test_verify_zero_candidate_fails(network, part211):
    zero = BoundingChain("upper", 2, 50, 50, {}, {}, part211.weights)
    rep = verify_assumptions(network, part211, zero, l_check=20)
    assert not rep.ok
    assert rep.counterexample["kind"] == "A1"


def test_verify_lower(network, part225, lower225):
    assert verify_assumptions(network, part225, lower225, l_check=60).ok
    exact = {k: v.copy() for k, v in lower225.exact.items()}
    exact[2][30] += 1.0  # a lower bound may not move up more than the network
    bad = BoundingChain("lower", lower225.j_max, lower225.l_exact,
                        lower225.l_total, exact, lower225.tails,
                        lower225.weights)
    rep = verify_assumptions(network, part225, bad, l_check=40)
    assert not rep.ok


def test_verify_horizon_precondition(network, part211, upper211):
    with pytest.raises(ValidationError):
        verify_assumptions(network, part211, upper211, l_check=5000)


def _feasible_perturbation(U, rng):
    """Feasible candidate that the optimal table must dominate."""
    J = U.j_max
    minus = U.minus.copy()
    plus = U.plus.copy()
    if U.direction == "upper":
        scales = np.sort(rng.uniform(0.3, 1.0, size=J))[::-1]
        bumps = np.sort(rng.uniform(0.0, 5.0, size=J))[::-1]
        for j in range(1, J + 1):
            minus[j] *= scales[j - 1]
            plus[j] += bumps[j - 1]
    else:
        bumps = np.sort(rng.uniform(0.0, 5.0, size=J))[::-1]
        scales = np.sort(rng.uniform(0.3, 1.0, size=J))[::-1]
        for j in range(1, J + 1):
            # entries with ell < j stand for mass below class 0 and must
            # stay zero, so only the columns ell >= j get lifted
            minus[j, j:] += bumps[j - 1]
            plus[j] *= scales[j - 1]
    return UTable(U.direction, J, U.l_exact, minus, plus)


def test_optimality(network, part211, part225, upper211, lower225):
    assert check_optimality(upper211, upper211, window=60).worst_margin == 0.0
    rng = np.random.default_rng(5)
    for chain, part in ((upper211, part211), (lower225, part225)):
        U = phi(chain)
        for _ in range(10):
            cand = phi_inverse(_feasible_perturbation(U, rng), part.weights)
            rep = check_optimality(cand, chain, window=60)
            assert rep.ok, rep.detail
        # the generator really produces feasible candidates
        cand = phi_inverse(_feasible_perturbation(U, rng), part.weights)
        assert verify_assumptions(network, part, cand, l_check=30).ok


def test_chain_csv_roundtrip(tmp_path, upper211, lower225, naive111):
    for chain in (upper211, lower225, naive111):
        path = tmp_path / "chain.csv"
        chain.to_csv(path)
        back = BoundingChain.from_csv(path)
        assert back.direction == chain.direction
        assert back.j_max == chain.j_max
        assert back.l_exact == chain.l_exact
        assert back.l_total == chain.l_total
        assert tuple(back.weights) == tuple(chain.weights)
        for ell in list(range(0, chain.l_exact)) + [chain.l_exact + 37]:
            for k in chain.offsets:
                assert back.rate(ell, k) == chain.rate(ell, k)
