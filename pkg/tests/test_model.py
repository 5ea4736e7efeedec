import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdir.model import (
    DimensionError,
    DocumentError,
    EdgeError,
    GeneratorSpec,
    MissingFieldError,
    NetworkModel,
    ValidationError,
    as_edge_set,
    delete_edges,
    emit_edge_document,
    emit_model_document,
    generate_network,
    load_edge_set,
    load_model,
    parse_edge_document,
    parse_model_document,
    save_edge_set,
    save_model,
    validate_model,
)

from conftest import chain_model, random_model


def single(**kw):
    params = dict(B=[[0.0]], alpha=[1.0], omega=[0.0], delta=[0.5], delta_prime=[0.5], x0=[1.0])
    params.update(kw)
    return NetworkModel(**params)


class TestValidate:
    def test_equality_case_is_valid(self):
        report = validate_model(single())
        assert report.ok
        assert report.violations == ()

    def test_healing_order(self):
        report = validate_model(single(delta=[0.6]))
        assert not report.ok
        assert report.rules() == {"healing_order"}

    def test_alpha_range(self):
        assert "alpha_range" in validate_model(single(alpha=[0.0])).rules()

    def test_row_sum(self):
        m = NetworkModel(
            B=[[0, 0.6, 0.5], [0, 0, 0], [0, 0, 0]],
            alpha=[1, 1, 1], omega=[0, 0, 0], delta=[0.5] * 3, delta_prime=[0.5] * 3, x0=[0, 1, 1],
        )
        report = validate_model(m)
        assert report.rules() == {"row_sum"}
        assert report.violations[0].index == 0

    def test_d_state_probability(self):
        assert "d_state_probability" in validate_model(single(omega=[0.6], delta_prime=[0.5])).rules()

    def test_initial_state_and_diagonal(self):
        report = validate_model(single(x0=[0.7], y0=[0.5], B=[[0.1]]))
        assert {"initial_state", "B_diagonal"} <= report.rules()

    def test_collects_every_violation(self):
        m = single(alpha=[0.0], delta=[0.9], delta_prime=[0.5], omega=[0.7])
        assert validate_model(m).rules() == {"healing_order", "alpha_range", "d_state_probability"}

    def test_dimension_mismatch_is_hard_error(self):
        with pytest.raises(DimensionError):
            NetworkModel(B=np.zeros((2, 2)), alpha=[1, 1, 1], omega=[0, 0], delta=[0, 0],
                         delta_prime=[0, 0], x0=[0, 0])
        with pytest.raises(DimensionError):
            NetworkModel(B=np.zeros((2, 3)), alpha=[1, 1], omega=[0, 0], delta=[0, 0],
                         delta_prime=[0, 0], x0=[0, 0])


class TestDeleteEdges:
    def test_empty_set_is_identity(self, chain):
        assert delete_edges(chain, []) == chain

    def test_delete_all_edges(self):
        m = random_model(3, n=10, p=0.4)
        assert not np.any(delete_edges(m, m.edges).B)

    def test_chain(self, chain):
        out = delete_edges(chain, [(0, 1)])
        assert out.B[1, 0] == 0
        assert np.array_equal(out.alpha, chain.alpha)
        assert chain.B[1, 0] == 0.3  # original untouched

    def test_absent_edge_warns(self, chain):
        with pytest.warns(UserWarning):
            out = delete_edges(chain, [(1, 0)])
        assert out == chain

    def test_absent_edge_strict(self, chain):
        with pytest.raises(EdgeError):
            delete_edges(chain, [(1, 0)], strict=True)

    def test_idempotent(self, chain):
        once = delete_edges(chain, [(0, 1)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert delete_edges(once, [(0, 1)]) == once

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.data())
    def test_composition(self, seed, data):
        m = random_model(seed, n=7, p=0.4)
        if not m.edges:
            return
        P1 = data.draw(st.sets(st.sampled_from(m.edges)))
        P2 = data.draw(st.sets(st.sampled_from(m.edges)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            left = delete_edges(delete_edges(m, sorted(P1)), sorted(P2))
        assert left == delete_edges(m, sorted(P1 | P2))


class TestSerialization:
    def test_round_trip(self):
        m = random_model(11, n=9)
        text = emit_model_document(m)
        again = parse_model_document(text)
        assert again == m
        assert emit_model_document(again) == text

    def test_deterministic_bytes(self):
        m = random_model(5)
        assert emit_model_document(m) == emit_model_document(m)

    def test_zero_edge_model(self):
        m = single()
        assert json.loads(emit_model_document(m))["edges"] == []

    def test_missing_field(self, chain):
        doc = json.loads(emit_model_document(chain))
        del doc["delta_prime"]
        with pytest.raises(MissingFieldError) as err:
            parse_model_document(json.dumps(doc))
        assert err.value.field == "delta_prime"

    def test_dimension_error(self, chain):
        doc = json.loads(emit_model_document(chain))
        doc["alpha"] = [1.0, 1.0, 1.0]
        with pytest.raises(DimensionError):
            parse_model_document(json.dumps(doc))

    def test_malformed(self):
        with pytest.raises(DocumentError):
            parse_model_document("{not json")
        with pytest.raises(DocumentError):
            parse_model_document("[]")

    def test_validation_failure_carries_report(self, chain):
        doc = json.loads(emit_model_document(chain))
        doc["delta"] = [0.9, 0.5]
        with pytest.raises(ValidationError) as err:
            parse_model_document(json.dumps(doc))
        assert err.value.report.rules() == {"healing_order"}

    def test_bad_edge_index(self, chain):
        doc = json.loads(emit_model_document(chain))
        doc["edges"].append([0, 7, 0.1])
        with pytest.raises(DocumentError):
            parse_model_document(json.dumps(doc))

    def test_files(self, tmp_path):
        m = random_model(2)
        save_model(m, tmp_path / "m.json")
        assert load_model(tmp_path / "m.json") == m
        save_edge_set(m.edges, tmp_path / "e.json")
        assert load_edge_set(tmp_path / "e.json") == m.edges

    def test_edge_documents(self):
        assert parse_edge_document(emit_edge_document([(2, 1), (0, 1)])) == ((2, 1), (0, 1))
        with pytest.raises(EdgeError):
            parse_edge_document("[[0, 1], [0, 1]]")
        with pytest.raises(EdgeError):
            as_edge_set([(3, 3)])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 1, allow_nan=False, exclude_max=True), min_size=3, max_size=3))
    def test_round_trip_exact_floats(self, values):
        a, b, c = values
        m = chain_model(alpha=[max(a, 1e-300), 1.0], delta=[b / 2, 0.5], delta_prime=[b / 2 + 0.25, 0.5],
                        B=[[0.0, 0.0], [c * 0.99, 0.0]])
        assert parse_model_document(emit_model_document(m), validate=False) == m


class TestGenerator:
    def test_outward_star(self):
        m = generate_network(GeneratorSpec(topology="star", n=5, direction="outward"), 0)
        assert len(m.edges) == 4
        assert all(j == 0 for j, _ in m.edges)
        assert m.x0[0] == 1.0

    def test_inward_star_path_complete(self):
        assert all(i == 0 for _, i in generate_network(GeneratorSpec(topology="star", n=5, direction="inward"), 0).edges)
        assert generate_network(GeneratorSpec(topology="path", n=6), 0).edges == tuple((i, i + 1) for i in range(5))
        assert generate_network(GeneratorSpec(topology="complete", n=4), 0).num_edges == 12

    def test_deterministic(self):
        spec = GeneratorSpec(n=30, p=0.2)
        assert generate_network(spec, 9) == generate_network(spec, 9)
        assert generate_network(spec, 9) != generate_network(spec, 10)

    def test_erdos_renyi_valid(self):
        m = generate_network(GeneratorSpec(topology="erdos_renyi", n=50, p=0.1), 42)
        assert validate_model(m).ok
        assert np.all(m.B.sum(axis=1) < 1)

    def test_row_rescaling_recorded(self):
        m = generate_network(GeneratorSpec(topology="complete", n=10, beta=(0.3, 0.5)), 1)
        assert m.metadata["rescaled_rows"] == list(range(10))
        assert np.allclose(m.B.sum(axis=1), 0.95)

    @pytest.mark.parametrize("bad", [
        dict(delta=(0.6, 0.8), delta_prime=(0.2, 0.5)),
        dict(alpha=(0.0, 0.5)),
        dict(beta=(0.5, 1.0)),
        dict(topology="ring"),
        dict(omega=(0.6, 0.7), delta_prime=(0.5, 0.6)),
        dict(seeds=30, n=20),
    ])
    def test_infeasible(self, bad):
        with pytest.raises(ValueError):
            generate_network(GeneratorSpec(**bad), 0)

    @settings(max_examples=40, deadline=None)
    @given(
        st.sampled_from(["erdos_renyi", "star", "path", "complete"]),
        st.integers(1, 25),
        st.integers(0, 2**63 - 1),
    )
    def test_always_valid(self, topology, n, seed):
        m = generate_network(GeneratorSpec(topology=topology, n=n, p=0.3, seeds=min(1, n)), seed)
        assert validate_model(m).ok

    def test_spec_dict_round_trip(self):
        spec = GeneratorSpec(n=7, beta=(0.1, 0.2))
        assert GeneratorSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
        with pytest.raises(DocumentError):
            GeneratorSpec.from_dict({"nodes": 3})
