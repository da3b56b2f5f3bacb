import pytest

from mqlab.errors import DimensionError, EnumerationLimitError
from mqlab.history import (
    comparable,
    consumption,
    digest,
    enumerate_ensembles,
    enumerate_histories,
    format_ensemble,
    format_history,
    is_superior,
    make_ensemble,
    market_share,
    parse_ensemble,
    parse_history,
    swap12,
)


@pytest.mark.parametrize("h,d", [("FNSSN", "FSS"), ("", ""), ("SSS", "SSS"), ("NNN", "")])
def test_digest(h, d):
    assert digest(h) == d


@pytest.mark.parametrize("h,c", [("FNSSN", 3), ("NNN", 0), ("", 0)])
def test_consumption(h, c):
    assert consumption(h) == c


def test_superiority_examples():
    assert is_superior("FSS", "FSF")
    assert not is_superior("FSF", "FSS")
    # different numbers of experiences are incomparable
    assert not is_superior("SS", "SFS")
    assert not comparable("SS", "SFS")
    assert all(is_superior(h, h) for h in enumerate_histories(3))


def test_superiority_requires_equal_depth_and_consumption():
    assert not is_superior("SN", "S")
    assert not is_superior("SN", "SS")
    # N-rounds may sit in different places: only the digests are compared
    assert is_superior("SNS", "FSN")
    assert not is_superior("SNF", "FSN")


def test_enumeration_counts_and_cap():
    assert enumerate_histories(0) == [""]
    assert enumerate_histories(1) == ["S", "F", "N"]
    four = enumerate_histories(4)
    assert len(four) == 81 and len(set(four)) == 81
    with pytest.raises(EnumerationLimitError):
        enumerate_histories(13)
    with pytest.raises(EnumerationLimitError):
        list(enumerate_ensembles(2, 2, 4))


def test_market_share_examples():
    e = make_ensemble([["S"], ["N"]])
    assert market_share(e, (5, 2), 0) == (5, 2)
    assert market_share(e, (0, 0), 1) == (1, 0)
    both = make_ensemble([["S", "F"], ["F", "S"]])
    assert market_share(both, (0, 0), 1) == (2, 2)
    with pytest.raises(DimensionError):
        market_share(e, (0, 0, 0), 1)


def test_ensemble_shape_checks():
    with pytest.raises(DimensionError):
        make_ensemble([["S", "F"], ["S"]])
    with pytest.raises(DimensionError):
        make_ensemble([["S", "FF"]])


def test_serialization_round_trip():
    assert parse_history("-") == ""
    assert format_history("") == "-"
    with pytest.raises(ValueError):
        parse_history("SXN")
    e = make_ensemble([["SN", "FF"], ["NN", "SS"]])
    assert format_ensemble(e) == "SN,FF|NN,SS"
    assert parse_ensemble(format_ensemble(e)) == e


def test_swap12():
    assert swap12((3, 1, 4)) == (1, 3, 4)
