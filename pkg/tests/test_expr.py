import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quasi_equilibria.errors import (
    ArityError,
    ExprDomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownFunctionError,
)
from quasi_equilibria.expr import (
    Binary,
    Call,
    Const,
    Unary,
    Var,
    VarEnv,
    as_expr,
    evaluate,
    fd_gradient,
    parse_expression,
)


class TestParse:
    def test_sum_of_product(self):
        assert parse_expression("0.5*x1 + w") == Binary("+", Binary("*", Const(0.5), Var("x1")), Var("w"))

    def test_max_call(self):
        tree = parse_expression("max(0, 1 - x1 - x2)")
        expected = Call(
            "max", (Const(0.0), Binary("-", Binary("-", Const(1.0), Var("x1")), Var("x2")))
        )
        assert tree == expected

    def test_power_is_right_associative(self):
        assert parse_expression("2^3^2") == Binary("^", Const(2.0), Binary("^", Const(3.0), Const(2.0)))

    def test_whitespace_is_insignificant(self):
        assert parse_expression(" x1*( 2 +w ) ") == parse_expression("x1*(2+w)")

    def test_exponent_numbers(self):
        assert parse_expression("1.5e-3") == Const(1.5e-3)

    def test_unbalanced_paren_offset(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse_expression("(x1 +")
        assert info.value.offset == 5

    def test_unexpected_character(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse_expression("x1 $ 2")
        assert info.value.offset == 3

    def test_trailing_tokens(self):
        with pytest.raises(ExprSyntaxError):
            parse_expression("x1 x2")

    def test_unknown_function(self):
        with pytest.raises(UnknownFunctionError) as info:
            parse_expression("sqrt(x1)")
        assert info.value.name == "sqrt"
        assert info.value.offset == 0

    @pytest.mark.parametrize("text", ["log(x1, x2)", "exp(1, 2, 3)", "abs(w, 1)"])
    def test_unary_call_arity(self, text):
        with pytest.raises(ArityError):
            parse_expression(text)

    def test_single_argument_max(self):
        assert evaluate(parse_expression("max(x1)"), {"x1": -2.0}) == -2.0

    def test_as_expr_accepts_numbers(self):
        assert evaluate(as_expr(-3), {}) == -3.0
        assert as_expr("w").variables() == frozenset({"w"})

    def test_variables_and_calls(self):
        tree = parse_expression("max(0, x1) + abs(w) * log(x2)")
        assert tree.variables() == frozenset({"x1", "x2", "w"})
        assert tree.calls() == frozenset({"max", "abs", "log"})


class TestEvaluate:
    def test_max_example(self):
        assert evaluate(parse_expression("max(0, 1 - x1 - x2)"), {"x1": 0.2, "x2": 0.3}) == pytest.approx(0.5)

    def test_leader_objective_example(self):
        assert evaluate(parse_expression("0.5*x1 + w"), {"x1": 0.0, "w": 1.0}) == 1.0

    def test_log_domain(self):
        with pytest.raises(ExprDomainError):
            evaluate(parse_expression("log(x1)"), {"x1": 0.0})

    def test_division_by_zero(self):
        with pytest.raises(ExprDomainError):
            evaluate(parse_expression("1 / (x1 - 1)"), {"x1": 1.0})

    def test_unbound_variable(self):
        with pytest.raises(UnboundVariableError) as info:
            evaluate(parse_expression("x1 + x2"), {"x1": 1.0})
        assert info.value.name == "x2"

    def test_integer_power_of_negative_base(self):
        assert evaluate(parse_expression("x1^3"), {"x1": -2.0}) == -8.0

    def test_fractional_power(self):
        assert evaluate(parse_expression("x1^0.5"), {"x1": 4.0}) == pytest.approx(2.0)

    def test_fractional_power_of_zero(self):
        assert evaluate(parse_expression("x1^0.5"), {"x1": 0.0}) == 0.0

    def test_fractional_power_of_negative_base(self):
        with pytest.raises(ExprDomainError):
            evaluate(parse_expression("x1^0.5"), {"x1": -1.0})

    def test_exp_overflow(self):
        with pytest.raises(ExprDomainError):
            evaluate(parse_expression("exp(x1)"), {"x1": 1e4})

    def test_var_env_lookup_is_strict(self):
        env = VarEnv.from_vectors(["x1", "w"], [0.5, 1.0])
        assert env["x1"] == 0.5
        with pytest.raises(UnboundVariableError):
            env["x2"]

    def test_pure(self):
        tree = parse_expression("exp(x1) * log(1 + w) - max(x1, w)^2")
        env = {"x1": 0.3141, "w": 2.718}
        assert evaluate(tree, env).hex() == evaluate(tree, env).hex()


class TestGradient:
    def test_linear_exact(self):
        grad = fd_gradient(parse_expression("0.5*x1"), {"x1": 0.7}, ["x1"], 1e-5)
        np.testing.assert_allclose(grad, [0.5], atol=1e-9)

    def test_bilinear(self):
        grad = fd_gradient(parse_expression("x1*x2"), {"x1": 2.0, "x2": 3.0}, ["x1", "x2"])
        np.testing.assert_allclose(grad, [3.0, 2.0], atol=1e-8)

    def test_kink_averages_one_sided_slopes(self):
        grad = fd_gradient(parse_expression("max(0, 1-x1-x2)"), {"x1": 0.5, "x2": 0.5}, ["x1"])
        np.testing.assert_allclose(grad, [-0.5], atol=1e-9)

    def test_missing_variable(self):
        with pytest.raises(UnboundVariableError):
            fd_gradient(parse_expression("x1"), {"x1": 1.0}, ["x2"])

    @given(
        coeffs=st.lists(st.floats(-10, 10), min_size=6, max_size=6),
        x=st.floats(-3, 3),
        y=st.floats(-3, 3),
    )
    def test_quadratic_matches_analytic(self, coeffs, x, y):
        c0, c1, c2, c3, c4, c5 = (float(c) for c in coeffs)
        text = (
            f"({c0!r}) + ({c1!r})*x + ({c2!r})*y + ({c3!r})*x^2 + ({c4!r})*x*y + ({c5!r})*y^2"
        )
        grad = fd_gradient(parse_expression(text), {"x": x, "y": y}, ["x", "y"], 1e-5)
        analytic = np.array([c1 + 2 * c3 * x + c4 * y, c2 + c4 * x + 2 * c5 * y])
        assert np.all(np.abs(grad - analytic) <= 1e-7 * np.maximum(1.0, np.abs(analytic)))


_leaves = st.one_of(
    st.floats(-5, 5, allow_nan=False).map(Const),
    st.sampled_from(["x", "y", "w"]).map(Var),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: Binary(*t)),
        children.map(lambda c: Unary("neg", c)),
        children.map(lambda c: Unary("abs", c)),
        st.tuples(st.sampled_from(["max", "min"]), st.lists(children, min_size=1, max_size=3)).map(
            lambda t: Call(t[0], tuple(t[1]))
        ),
    )


expressions = st.recursive(_leaves, _extend, max_leaves=12)


@given(tree=expressions, seed=st.integers(0, 2**16))
def test_print_then_parse_preserves_values(tree, seed):
    reparsed = parse_expression(tree.to_source())
    rng = np.random.default_rng(seed)
    for _ in range(100):
        env = dict(zip(["x", "y", "w"], rng.uniform(-2.0, 2.0, 3)))
        expected = evaluate(tree, env)
        assert math.isclose(evaluate(reparsed, env), expected, rel_tol=1e-12, abs_tol=1e-12)
