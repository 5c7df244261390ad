import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htnet.forge import generate_scenario
from htnet.model import make_batch
from htnet.model.encoder import (
    AgentEncoder,
    ConvPool,
    LaneConv,
    LaneEncoder,
    SparseAttentionBlock,
    kl_to_uniform,
    m_score,
    n_selected,
    positional_encoding,
)
from htnet.tensor import ShapeError, Tensor
from oracles import m_scores_by_hand, randomize, reference_attention_block


class TestPositionalEncoding:
    def test_position_zero(self):
        np.testing.assert_array_equal(positional_encoding(0, 6, 20), [0, 1, 0, 1, 0, 1])

    def test_hand_values(self):
        pe = positional_encoding(3, 4, 20)
        base = 40.0
        expect = [math.sin(3), math.cos(3), math.sin(3 / base**0.5), math.cos(3 / base**0.5)]
        np.testing.assert_allclose(pe, expect, atol=1e-15)

    def test_negative_position(self):
        with pytest.raises(ValueError):
            positional_encoding(-1, 4, 20)


class TestScores:
    def test_m_score_hand_value(self):
        q = np.array([1.0, 0.0])
        K = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert m_score(q, K) == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-15)

    def test_kl_matches_definition(self, rng):
        q, K = rng.normal(size=4), rng.normal(size=(7, 4))
        s = K @ q / 2.0
        p = np.exp(s) / np.exp(s).sum()
        u = np.full(7, 1 / 7)
        assert kl_to_uniform(q, K) == pytest.approx(float((u * np.log(u / p)).sum()), abs=1e-12)

    def test_kl_stable_for_large_scores(self):
        q = np.array([1000.0, 0.0])
        K = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert math.isfinite(kl_to_uniform(q, K))

    @pytest.mark.parametrize("L,ratio,n", [(20, 0.75, 15), (5, 0.75, 4), (3, 0.01, 1), (8, 1.0, 8)])
    def test_selected_count(self, L, ratio, n):
        assert n_selected(L, ratio) == n

    def test_zero_ratio_rejected(self):
        with pytest.raises(ValueError):
            n_selected(10, 0.0)


class TestSparseAttention:
    def test_full_selection_equals_dense_block(self, rng):
        block = SparseAttentionBlock(16, 4, 1.0, rng)
        randomize(block, rng)
        x = rng.normal(size=(3, 9, 16))
        out, _ = block(Tensor(x))
        for n in range(3):
            np.testing.assert_allclose(out.data[n], reference_attention_block(block, x[n]), atol=1e-10)

    def test_partial_selection_matches_oracle(self, rng):
        block = SparseAttentionBlock(8, 2, 0.5, rng)
        randomize(block, rng)
        x = rng.normal(size=(10, 8))
        out, trace = block(Tensor(x[None]))
        m = m_scores_by_hand(block, x)
        np.testing.assert_allclose(trace.m_scores[0], m, atol=1e-12)
        selected = [set(np.argsort(-m[h], kind="stable")[:5].tolist()) for h in range(2)]
        assert [set(s.tolist()) for s in trace.selected[0]] == selected
        np.testing.assert_allclose(out.data[0], reference_attention_block(block, x, selected), atol=1e-10)

    def test_unselected_rows_get_residual_only(self, rng):
        block = SparseAttentionBlock(8, 1, 0.3, rng)
        x = rng.normal(size=(1, 10, 8))
        a, trace = block.attend(Tensor(x))
        chosen = set(trace.selected[0, 0].tolist())
        for i in range(10):
            assert (np.abs(a.data[0, i]).max() > 0) == (i in chosen)

    def test_ties_go_to_lower_index(self, rng):
        block = SparseAttentionBlock(4, 1, 0.5, rng)
        x = np.tile(rng.normal(size=4), (6, 1))[None]
        _, trace = block(Tensor(x))
        np.testing.assert_array_equal(trace.selected[0, 0], [0, 1, 2])

    def test_rows_are_distributions(self, rng):
        block = SparseAttentionBlock(8, 2, 0.75, rng)
        _, trace = block(Tensor(rng.normal(size=(2, 8, 8))))
        np.testing.assert_allclose(trace.weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_trace_csv(self, rng, tmp_path):
        block = SparseAttentionBlock(8, 2, 0.5, rng)
        _, trace = block(Tensor(rng.normal(size=(1, 6, 8))))
        lines = trace.to_csv(tmp_path / "t.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 6
        assert sum(line.split(",")[3] == "1" for line in lines[1:]) == 2 * 3

    def test_rejects_2d_input(self, rng):
        with pytest.raises(ShapeError):
            SparseAttentionBlock(8, 2, 0.5, rng).attend(Tensor(np.zeros((4, 8))))

    @settings(max_examples=20, deadline=None)
    @given(L=st.integers(2, 12), seed=st.integers(0, 2**16))
    def test_top_queries_have_largest_m(self, L, seed):
        rng = np.random.default_rng(seed)
        block = SparseAttentionBlock(8, 2, 0.5, rng)
        _, trace = block(Tensor(rng.normal(size=(1, L, 8))))
        for h in range(2):
            m = trace.m_scores[0, h]
            sel = trace.selected[0, h]
            rest = np.setdiff1d(np.arange(L), sel)
            if len(rest):
                assert m[sel].min() >= m[rest].max()


class TestConvPool:
    def test_matches_loops(self, rng):
        unit = ConvPool(3, 3, rng)
        randomize(unit, rng)
        x = rng.normal(size=(1, 5, 3))
        out = unit(Tensor(x)).data[0]
        w, b = unit.weight.data, unit.bias.data
        xp = np.vstack([np.zeros((1, 3)), x[0], np.zeros((1, 3))])
        conv = np.array([sum(xp[t + k] @ w[k] for k in range(3)) + b for t in range(5)])
        pooled = np.array([conv[0:2].max(0), conv[2:4].max(0), conv[4:5].max(0)])
        np.testing.assert_allclose(out, pooled, atol=1e-12)

    def test_length_one_rejected(self, rng):
        with pytest.raises(ShapeError):
            ConvPool(4, 3, rng)(Tensor(np.zeros((1, 1, 4))))


class TestAgentEncoder:
    def test_output_shape_and_traces(self, rng):
        enc = AgentEncoder(16, 4, 0.75, 3, 3, 20, rng)
        out, traces = enc(Tensor(rng.normal(size=(5, 20, 6))))
        assert out.shape == (5, 16)
        # lengths 20, 10, 5 after successive pooling
        assert [t.scores.shape[-1] for t in traces] == [20, 10, 5]

    def test_items_are_independent(self, rng):
        enc = AgentEncoder(8, 2, 0.75, 2, 3, 10, rng)
        x = rng.normal(size=(3, 10, 6))
        joint, _ = enc(Tensor(x))
        alone, _ = enc(Tensor(x[1:2]))
        np.testing.assert_allclose(joint.data[1], alone.data[0], atol=1e-12)


class TestLaneConv:
    def test_matches_dense_adjacency(self, rng):
        sc = generate_scenario("crossing", 3, 0)
        g = sc.graph
        b = make_batch([sc], (1, 2))
        conv = LaneConv(6, (1, 2), rng)
        x = rng.normal(size=(g.n, 6))
        got = conv(Tensor(x), b.edges).data
        W = {n: getattr(conv, f"w_{n}").weight.data for n in "frlmops"}
        expect = x @ W["f"]
        for rel, key in (("right", "r"), ("left", "l"), ("merge", "m"), ("overlap", "o")):
            expect = expect + g.dense(rel) @ x @ W[key]
        for k in (1, 2):
            expect = expect + g.dense("pred", k) @ x @ W["p"] + g.dense("succ", k) @ x @ W["s"]
        np.testing.assert_allclose(got, expect, atol=1e-10)

    def test_isolated_vectors_only_self_term(self, rng):
        conv = LaneConv(4, (1,), rng)
        empty = (np.zeros(0, np.int64), np.zeros(0, np.int64))
        edges = {(r, 1): empty for r in ("right", "left", "merge", "overlap", "pred", "succ")}
        x = rng.normal(size=(3, 4))
        np.testing.assert_allclose(conv(Tensor(x), edges).data, x @ conv.w_f.weight.data)

    def test_lane_encoder_shape(self, rng):
        sc = generate_scenario("T_junction", 2, 0)
        b = make_batch([sc])
        out = LaneEncoder(8, 2, (1, 2), rng)(Tensor(b.lane_features), b.edges)
        assert out.shape == (sc.n_lanes, 8)
        assert np.all(out.data >= 0)
