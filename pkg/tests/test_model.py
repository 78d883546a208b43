import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import leader, make_instance, quadratic_document
from quasi_equilibria.errors import (
    DimensionMismatch,
    ExprSyntaxError,
    InvalidParamsError,
    InvariantViolation,
    SchemaError,
    UnknownGalleryError,
)
from quasi_equilibria.model import (
    GALLERY,
    build_gallery,
    dump_instance,
    leader_objective,
    load_instance,
)
from quasi_equilibria.vi import BudgetSet


def _document(**overrides):
    doc = {
        "name": "doc",
        "leaders": [leader(1, "0.5*x1"), leader(2, "-0.5*x2")],
        "h": "-w",
        "pi": "0.5*x1 - 0.5*x2",
        "follower": {
            "dim": 1,
            "G": ["-1 + x1 + x2 + w"],
            "K": {"kind": "box", "lower": [0.0], "upper": [None]},
            "search_lower": [0.0],
            "search_upper": [2.0],
        },
    }
    doc.update(overrides)
    return doc


class TestLoadInstance:
    def test_pang_fukushima_round_trip(self, pf_original):
        g = load_instance(dump_instance(pf_original))
        assert g.n_leaders == 2
        assert g.is_raw
        assert g.follower.dim == 1
        assert g.x_names == ("x1", "x2")
        assert leader_objective(g, 1, (0.2, 0.3), (0.5,)) == pytest.approx(0.6)
        assert leader_objective(g, 2, (0.2, 0.3), (0.5,)) == pytest.approx(-0.65)

    def test_invalid_json(self):
        with pytest.raises(SchemaError):
            load_instance("{not json")

    def test_missing_coupling(self):
        doc = _document()
        del doc["h"]
        with pytest.raises(SchemaError):
            load_instance(json.dumps(doc))

    def test_both_couplings(self):
        with pytest.raises(SchemaError):
            load_instance(json.dumps(_document(raw_h=["w", "-w"])))

    def test_unknown_field(self):
        with pytest.raises(SchemaError):
            load_instance(json.dumps(_document(extra=1)))

    def test_phi_must_not_mention_follower(self):
        doc = _document(leaders=[leader(1, "0.5*x1 + w"), leader(2, "-0.5*x2")])
        with pytest.raises(InvariantViolation, match="follower"):
            load_instance(json.dumps(doc))

    def test_pi_must_be_smooth(self):
        with pytest.raises(InvariantViolation, match="smooth"):
            load_instance(json.dumps(_document(pi="max(x1, x2)")))

    def test_unknown_variable(self):
        with pytest.raises(InvariantViolation, match="x3"):
            load_instance(json.dumps(_document(h="x3*w")))

    def test_leader_ids_must_be_contiguous(self):
        doc = _document(leaders=[leader(1, "x1"), leader(3, "x3")])
        with pytest.raises(InvariantViolation):
            load_instance(json.dumps(doc))

    def test_box_must_be_compact(self):
        doc = _document(leaders=[leader(1, "x1", 1.0, 0.0), leader(2, "x2")])
        with pytest.raises(InvariantViolation, match="empty"):
            load_instance(json.dumps(doc))

    def test_search_box_required_for_unbounded_k(self):
        doc = _document()
        del doc["follower"]["search_lower"]
        del doc["follower"]["search_upper"]
        with pytest.raises(InvariantViolation, match="search box"):
            load_instance(json.dumps(doc))

    def test_search_box_must_cover_k(self):
        doc = _document()
        doc["follower"]["K"] = {"kind": "box", "lower": [0.0], "upper": [3.0]}
        with pytest.raises(InvariantViolation, match="cover"):
            load_instance(json.dumps(doc))

    def test_empty_k_on_x(self):
        doc = _document()
        doc["follower"]["K"] = {"kind": "box", "lower": ["x1"], "upper": [0.5]}
        with pytest.raises(InvariantViolation, match="invalid"):
            load_instance(json.dumps(doc))

    def test_expression_error_names_field(self):
        with pytest.raises(ExprSyntaxError) as info:
            load_instance(json.dumps(_document(h="(w +")))
        assert "in field h" in info.value.__notes__

    def test_budget_set(self, congestion):
        assert isinstance(congestion.follower.K, BudgetSet)
        assert congestion.w_names == ("w_1", "w_2")
        np.testing.assert_allclose(congestion.follower.search.upper, [1.0, 1.0])

    def test_dump_is_stable(self, congestion):
        assert dump_instance(load_instance(dump_instance(congestion))) == dump_instance(congestion)

    @given(
        x=st.tuples(st.floats(0, 1), st.floats(0, 1)),
        w=st.floats(0, 2),
    )
    def test_round_trip_preserves_objectives(self, x, w):
        g = make_instance(quadratic_document(3))
        reloaded = load_instance(dump_instance(g))
        for i in (1, 2):
            assert leader_objective(reloaded, i, x, (w,)) == leader_objective(g, i, x, (w,))
        assert reloaded.quasi_potential(x, (w,)) == g.quasi_potential(x, (w,))


class TestGameInstance:
    def test_leader_out_of_range(self, pf_minus):
        with pytest.raises(DimensionMismatch):
            pf_minus.leader(3)

    def test_profile_dimension(self, pf_minus):
        with pytest.raises(DimensionMismatch):
            pf_minus.x_env((0.1, 0.2, 0.3))

    def test_with_block(self, pf_minus):
        np.testing.assert_array_equal(pf_minus.with_block((0.1, 0.2), 2, [0.9]), [0.1, 0.9])

    def test_display_sign(self, congestion, pf_minus):
        assert congestion.display(-1.5) == 1.5
        assert pf_minus.display(-1.5) == -1.5

    @given(
        x=st.tuples(st.floats(0, 1), st.floats(0, 1)),
        u=st.floats(0, 1),
        w=st.floats(-5, 5),
        seed=st.integers(0, 19),
    )
    def test_unilateral_differences_match_potential(self, x, u, w, seed):
        g = make_instance(quadratic_document(seed))
        for i in (1, 2):
            moved = g.with_block(x, i, [u])
            leader_change = leader_objective(g, i, moved, (w,)) - leader_objective(g, i, x, (w,))
            potential_change = g.quasi_potential(moved, (w,)) - g.quasi_potential(x, (w,))
            assert leader_change == pytest.approx(potential_change, abs=1e-9)


class TestGallery:
    def test_names(self):
        assert set(GALLERY) == {"pang_fukushima", "pf_variant", "multivalued_vi_demo", "congestion_control"}

    def test_unknown(self):
        with pytest.raises(UnknownGalleryError):
            build_gallery("prisoners_dilemma")

    def test_pf_variant_default_is_minus_w(self):
        g = build_gallery("pf_variant")
        assert leader_objective(g, 1, (0.0, 0.0), (1.0,)) == -1.0

    def test_pf_variant_h_expr_alias(self):
        g = build_gallery("pf_variant", {"h_expr": "w"})
        assert leader_objective(g, 2, (0.0, 1.0), (0.0,)) == -0.5

    def test_pf_variant_rejects_leader_variables(self):
        with pytest.raises(InvalidParamsError):
            build_gallery("pf_variant", {"h": "w + x1"})

    def test_congestion_is_maximisation(self, congestion):
        assert congestion.sense == "max"
        assert congestion.n_leaders == 2

    def test_congestion_vector_params(self):
        g = build_gallery("congestion_control", {"N": 3, "a": [1, 2, 3], "xbar": 2})
        assert g.n_leaders == 3
        assert g.leader(3).box.upper == (2.0,)

    @pytest.mark.parametrize(
        "params",
        [{"N": 0}, {"N": 1.5}, {"c": -1}, {"a": "1,2,3"}, {"xbar": 0}, {"gamma": "fast"}],
    )
    def test_congestion_rejects_params(self, params):
        with pytest.raises(InvalidParamsError):
            build_gallery("congestion_control", params)
