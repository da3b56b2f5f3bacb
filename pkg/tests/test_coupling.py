import pytest

from mqlab.coupling import (
    build_ensemble_joint,
    build_joint,
    criterion_ensemble,
    criterion_single,
    herding_mode,
    pair_rounds,
    ratio_identity_residuals,
    verify_coupling,
    verify_joint,
)
from mqlab.errors import (
    ContractError,
    EnumerationLimitError,
    NotInSupportError,
    ParameterError,
    UnsupportedConfigurationError,
)
from mqlab.exact import ensemble_distribution
from mqlab.history import digests_superior, enumerate_histories
from mqlab.market import MarketSpec
from mqlab.strategies import (
    BetaPosterior,
    Constant,
    HerdingBeta,
    LastExperience,
    LeaderFollower,
    TableStrategy,
)


def test_hand_example_t1():
    for side in ("row", "column"):
        t = build_joint(Constant(1.0), 1, 0.2, 0.6, side)
        # failure branch of the quality factor: (0.6 - 0.2) / 0.8 = 0.5
        assert t.entries.keys() == {("S", "S"), ("F", "S"), ("F", "F")}
        assert t.entries[("S", "S")] == pytest.approx(0.2, abs=1e-15)
        assert t.entries[("F", "S")] == pytest.approx(0.4, abs=1e-15)
        assert t.entries[("F", "F")] == pytest.approx(0.4, abs=1e-15)


def test_near_equal_qualities_give_diagonal():
    t = build_joint(BetaPosterior(), 3, 0.4, 0.4 + 1e-9, "row")
    off = sum(p for (z, zp), p in t.entries.items() if z != zp)
    assert off < 1e-6


def test_beta_posterior_row_equals_column():
    rep, row, col = verify_coupling(BetaPosterior(), 4, 0.3, 0.7)
    assert rep.passed, rep.failed()
    assert rep.checks["entrywise"]["max_abs_diff"] <= 1e-12
    assert row.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_always_consume_support_is_plain_superiority():
    t = build_joint(Constant(1.0), 3, 0.3, 0.6, "row")
    support = set(t.support())
    expected = {(a, b) for a in enumerate_histories(3) for b in enumerate_histories(3)
                if "N" not in a + b and digests_superior(b, a)}
    assert support == expected


def test_tamper_is_located():
    _, row, col = verify_coupling(LastExperience(), 3, 0.3, 0.7)
    key = sorted(row.entries)[5]
    row.entries[key] += 1e-6
    rep = verify_joint(row, col)
    assert not rep.checks["entrywise"]["passed"]
    assert rep.checks["entrywise"]["witness"] == [key[0] or "-", key[1] or "-"]


def test_parameter_and_contract_errors():
    with pytest.raises(ParameterError):
        build_joint(BetaPosterior(), 2, 0.5, 0.5)
    with pytest.raises(EnumerationLimitError):
        build_joint(BetaPosterior(), 6, 0.2, 0.4)
    bad = TableStrategy({"S": 0.1, "F": 0.9}, default=0.5)
    with pytest.raises(ContractError):
        build_joint(bad, 2, 0.2, 0.6)


def test_non_monotone_reports_factor_violations():
    bad = TableStrategy({"S": 0.1, "F": 0.9}, default=0.5)
    rep, row, col = verify_coupling(bad, 2, 0.2, 0.6, check=False)
    assert not rep.checks["factor_bounds"]["passed"]
    assert rep.checks["factor_bounds"]["witness"]["round"] == 2


def test_pair_rounds():
    assert pair_rounds("SNF", "SSN") == {1: 1, 3: 2, 2: 3}
    assert pair_rounds("SFS", "SFS") == {1: 1, 2: 2, 3: 3}
    assert pair_rounds("NNN", "NNN") == {1: 1, 2: 2, 3: 3}
    with pytest.raises(NotInSupportError):
        pair_rounds("SS", "FS")


def test_pairing_is_bijective_on_support():
    _, row, _ = verify_coupling(BetaPosterior(), 4, 0.3, 0.7)
    for z, zp in row.support():
        mp = pair_rounds(z, zp)
        assert sorted(mp) == sorted(mp.values()) == [1, 2, 3, 4]
        cons_z = [k for k in range(1, 5) if z[k - 1] != "N"]
        cons_zp = [k for k in range(1, 5) if zp[k - 1] != "N"]
        assert [mp[k] for k in cons_z] == cons_zp[:len(cons_z)]


def test_ratio_identities_hold_on_support():
    s = BetaPosterior()
    _, row, _ = verify_coupling(s, 4, 0.3, 0.7)
    for z, zp in row.support():
        res = ratio_identity_residuals(s, z, zp, 0.3, 0.7)
        assert res["g"] <= 1e-12 and res["h"] <= 1e-12


def test_criterion_predicates():
    assert criterion_single("SNF", "SSN")
    assert not criterion_single("SS", "SF")
    # product 1 dominates, product 2 lags
    assert criterion_ensemble((("F",), ("S",)), (("S",), ("S",)))
    assert not criterion_ensemble((("S",), ("N",)), (("S",), ("S",)))


def test_ensemble_factorized_example():
    spec = MarketSpec.uniform(Constant(1.0), 1, 2, (0.2, 0.5))
    rep, row, _ = verify_coupling(spec, 1, (0.2, 0.5), (0.6, 0.5))
    assert rep.passed
    prod1 = {}
    for (z, zp), p in row.entries.items():
        assert z[1] == zp[1]  # product 2 component is diagonal
        prod1[(z[0][0], zp[0][0])] = prod1.get((z[0][0], zp[0][0]), 0.0) + p
    single = build_joint(Constant(1.0), 1, 0.2, 0.6, "row").entries
    for k, v in single.items():
        assert prod1[k] == pytest.approx(v, abs=1e-15)


def test_weak_herding_support_is_diagonal_off_product_1():
    spec = MarketSpec.uniform(HerdingBeta(), 2, 2, (0.4, 0.5))
    rep, row, col = verify_coupling(spec, 2, (0.4, 0.5), (0.7, 0.5))
    assert rep.passed, rep.failed()
    for z, zp in row.support():
        assert z[1] == zp[1]
    marg = ensemble_distribution(spec, 2, (0.4, 0.5))
    sums = row.row_sums()
    for e, p in marg.items():
        assert sums.get(e, 0.0) == pytest.approx(p, abs=1e-12)


def test_competitive_leader_follower():
    spec = MarketSpec.uniform(LeaderFollower(), 1, 2, (0.4, 0.5))
    assert herding_mode(spec, 2) == "competitive"
    rep, row, col = verify_coupling(spec, 2, (0.4, 0.5), (0.7, 0.5))
    assert rep.passed, rep.failed()
    for z, zp in row.support():
        res = ratio_identity_residuals(spec, z, zp, (0.4, 0.5), (0.7, 0.5))
        assert res["g"] <= 1e-12 and res["h"] <= 1e-12


def test_ensemble_errors():
    spec3 = MarketSpec.uniform(LeaderFollower(), 1, 3, (0.4, 0.5, 0.5))
    with pytest.raises(UnsupportedConfigurationError):
        build_ensemble_joint(spec3, 2, (0.4, 0.5, 0.5), (0.7, 0.5, 0.5))
    spec = MarketSpec.uniform(BetaPosterior(), 2, 2, (0.4, 0.5))
    with pytest.raises(ParameterError):
        build_ensemble_joint(spec, 1, (0.4, 0.5), (0.7, 0.6))
    with pytest.raises(EnumerationLimitError):
        build_ensemble_joint(spec, 3, (0.4, 0.5), (0.7, 0.5))


def test_r_values_sum_to_one():
    from mqlab.coupling import _single_layout, row_step, column_step

    s = BetaPosterior()
    lay = _single_layout(s)
    for x in enumerate_histories(3):
        info = lay.anchor_info((x,), 3)
        for k in range(1, 4):
            for yp in enumerate_histories(k - 1):
                for step in (row_step, column_step):
                    opts = step(lay, (x,), info, (yp,), (0,), k, (0.3,), (0.7,), [])
                    assert sum(r for _, r in opts[0]) == pytest.approx(1.0, abs=1e-15)
