import warnings

import pytest

from mqlab.errors import ExpressionSyntaxError
from mqlab.expr import DivisionByZeroWarning, evaluate_node, parse_strategy_expr, to_text, variables
from mqlab.errors import ExpressionEvalError
from mqlab.strategies import BetaPosterior, Elitist, ExprStrategy, evaluate
from mqlab.history import enumerate_histories


def test_beta_posterior_expression_matches_builtin():
    s = ExprStrategy("(s + 1) / (c + 2)")
    b = BetaPosterior()
    for h in enumerate_histories(4):
        assert evaluate(s, h) == evaluate(b, h)


def test_elitist_expression_matches_builtin():
    s = ExprStrategy("if isleader then 0 else 1")
    e = Elitist()
    assert s.share_aware
    for w in [(0, 0), (3, 2), (2, 2), (1, 4)]:
        for i in range(2):
            assert evaluate(s, "S", w, i) == evaluate(e, "S", w, i)


def test_syntax_error_offset():
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse_strategy_expr("(s + ) / 2")
    assert exc.value.offset == 5
    assert "offset 5" in str(exc.value)


@pytest.mark.parametrize("text", ["s + q", "foo", "last0", "if s then 1", "1 +", "share(0)"])
def test_rejects_bad_input(text):
    with pytest.raises(ExpressionSyntaxError):
        parse_strategy_expr(text)


def test_unicode_operators():
    a = parse_strategy_expr("s × 2 − f ÷ 4")
    b = parse_strategy_expr("s * 2 - f / 4")
    assert a == b


def test_print_parse_round_trip():
    for text in ["(s + 1) / (c + 2)", "if myshare >= maxothershare then 1 else 0.5 * last1",
                 "s - (f - c)", "-(s) * 2", "if d == 0 then 1 else s / d", "share(2) / (share(1) + 1)"]:
        tree = parse_strategy_expr(text)
        assert parse_strategy_expr(to_text(tree)) == tree


def test_division_by_zero_is_zero_with_warning():
    tree = parse_strategy_expr("s / c")
    with pytest.warns(DivisionByZeroWarning):
        assert evaluate_node(tree, {"s": 0.0, "c": 0.0}) == 0.0
    with pytest.raises(ExpressionEvalError):
        evaluate_node(tree, {"s": 0.0, "c": 0.0}, strict=True)


def test_last_k_absent_counts_as_zero():
    s = ExprStrategy("last2")
    assert evaluate(s, "") == 0.0
    assert evaluate(s, "SNF") == 1.0
    assert evaluate(s, "FNS") == 0.0
    assert variables(s.tree) == {"last2"}


def test_clamping():
    s = ExprStrategy("s + 0.7")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert evaluate(s, "SS") == 1.0
