import json

import numpy as np
import pytest

from htnet.forge import (
    MANEUVERS,
    ForgeConfig,
    LabelConfig,
    NoiseSpec,
    ScenarioFormatError,
    capacity,
    generate_dataset,
    generate_scenario,
    inject_noise,
    iter_scenarios,
    label_lanes,
    read_scenarios,
    write_scenarios,
)
from oracles import brute_force_lane_labels, brute_force_maneuver

CONSTANT = ForgeConfig(cruise_speed=(10.0, 10.0), cruise_accel=(0.0, 0.0), patterns={"cruise": 1.0},
                       other_class_prob=0.0, late_prob=0.0)


class TestGenerator:
    def test_constant_speed_history(self):
        sc = generate_scenario("straight", 1, 3, CONSTANT)
        np.testing.assert_allclose(sc.agents[0].history[:, :2], np.tile([1.0, 0.0], (20, 1)), atol=1e-9)
        np.testing.assert_array_equal(sc.agents[0].history[:, 2], np.ones(20))

    @pytest.mark.parametrize("kind", ["straight", "curve", "lane_change", "T_junction", "crossing"])
    def test_shapes_and_frame(self, kind):
        sc = generate_scenario(kind, 4, 11)
        assert sc.n_agents == 4
        np.testing.assert_array_equal(sc.agents[0].anchor, [0.0, 0.0])
        for a in sc.agents:
            assert a.history.shape == (20, 3) and a.future.shape == (30, 2)
        assert sc.lane_labels.shape == (4, sc.n_lanes)
        assert set(sc.maneuver_labels) <= set(MANEUVERS)

    def test_deterministic(self):
        a, b = generate_scenario("crossing", 5, 9), generate_scenario("crossing", 5, 9)
        for x, y in zip(a.agents, b.agents):
            np.testing.assert_array_equal(x.history, y.history)
            np.testing.assert_array_equal(x.future, y.future)

    def test_capacity_error(self):
        with pytest.raises(ValueError, match="at most"):
            generate_scenario("straight", capacity("straight") + 1, 0)

    def test_zero_agents_rejected(self):
        with pytest.raises(ValueError):
            generate_scenario("straight", 0, 0)

    def test_unknown_map(self):
        with pytest.raises(ValueError, match="unknown map kind"):
            generate_scenario("roundabout", 2, 0)

    def test_late_agents_have_few_frames(self):
        cfg = ForgeConfig(late_prob=1.0)
        sc = generate_scenario("crossing", 6, 2, cfg)
        assert sc.agents[0].perceived == 20
        for a in sc.agents[1:]:
            assert 1 <= a.perceived <= 4
            assert np.all(a.history[: 20 - a.perceived] == 0.0)

    def test_dataset_cycles_maps(self):
        ds = generate_dataset(10, 0)
        assert [s.map_kind for s in ds[:5]] == ["straight", "curve", "lane_change", "T_junction", "crossing"]


class TestLabels:
    def test_maneuvers_match_brute_force(self):
        cfg = LabelConfig()
        for sc in generate_dataset(40, 21):
            for i in range(sc.n_agents):
                assert sc.maneuver_labels[i] == brute_force_maneuver(sc.agents, sc.graph, i, cfg)

    def test_lane_labels_match_sampled_distance(self):
        for sc in generate_dataset(5, 4):
            for i, a in enumerate(sc.agents):
                got = label_lanes(a, sc.graph, 1.5)
                ref = brute_force_lane_labels(a, sc.graph, 1.5)
                # sampling can only overestimate distance, so ref implies got
                assert np.all(got[ref])
                assert np.sum(got & ~ref) <= 1

    def test_every_class_occurs(self):
        seen = {m for sc in generate_dataset(60, 8) for m in sc.maneuver_labels}
        assert seen == set(MANEUVERS)


class TestNoise:
    def test_zero_probability_is_identity(self):
        sc = generate_scenario("curve", 3, 1)
        out = inject_noise(sc, NoiseSpec("gaussian", 0.0), 5)
        for a, b in zip(sc.agents, out.agents):
            np.testing.assert_array_equal(a.history, b.history)
        assert out is not sc

    def test_loss_mode_zeroes_frames(self):
        sc = generate_scenario("straight", 2, 1, CONSTANT)
        out = inject_noise(sc, NoiseSpec("loss", 1.0), 0)
        for a in out.agents:
            assert np.all(a.history == 0.0)

    def test_input_untouched(self):
        sc = generate_scenario("straight", 2, 1)
        before = sc.agents[0].history.copy()
        inject_noise(sc, NoiseSpec("gaussian", 1.0), 0)
        np.testing.assert_array_equal(sc.agents[0].history, before)

    def test_gaussian_std_is_speed_over_100(self):
        sc = generate_scenario("straight", 1, 3, CONSTANT)
        spec = NoiseSpec("gaussian", 1.0)
        diffs = np.concatenate([
            (inject_noise(sc, spec, s).agents[0].history - sc.agents[0].history)[:, :2].ravel()
            for s in range(300)
        ])
        # speed 10 m/s gives sigma 0.1; 12000 draws put the estimate within a few percent
        assert np.std(diffs) == pytest.approx(0.1, rel=0.05)
        assert np.mean(diffs) == pytest.approx(0.0, abs=0.005)

    def test_hit_rate(self):
        sc = generate_scenario("straight", 1, 3, CONSTANT)
        hits = np.concatenate([
            inject_noise(sc, NoiseSpec("loss", 0.3), s).agents[0].history[:, 2] == 0 for s in range(500)
        ])
        assert hits.mean() == pytest.approx(0.3, abs=0.02)

    @pytest.mark.parametrize("mode,p", [("blur", 0.1), ("loss", 1.5), ("gaussian", -0.1)])
    def test_invalid_spec(self, mode, p):
        with pytest.raises(ValueError):
            NoiseSpec(mode, p)


class TestScenarioFiles:
    def test_round_trip_exact(self, tmp_path):
        ds = generate_dataset(6, 2)
        assert write_scenarios(tmp_path / "s.jsonl", ds) == 6
        back = read_scenarios(tmp_path / "s.jsonl")
        for a, b in zip(ds, back):
            assert a.maneuver_labels == b.maneuver_labels
            np.testing.assert_array_equal(a.lane_labels, b.lane_labels)
            np.testing.assert_array_equal(a.graph.features(), b.graph.features())
            assert a.graph.succ == b.graph.succ
            for x, y in zip(a.agents, b.agents):
                np.testing.assert_array_equal(x.history, y.history)
                np.testing.assert_array_equal(x.future, y.future)

    def test_streaming_reads_lazily(self, tmp_path):
        path = tmp_path / "s.jsonl"
        write_scenarios(path, generate_dataset(3, 2))
        with open(path, "a") as fh:
            fh.write("{broken\n")
        it = iter_scenarios(path)
        assert next(it).n_agents >= 1
        with pytest.raises(ScenarioFormatError, match="line 5"):
            list(it)

    def test_truncated_record(self, tmp_path):
        path = tmp_path / "s.jsonl"
        write_scenarios(path, generate_dataset(2, 2))
        text = path.read_text()
        path.write_text(text[: len(text) - 40])
        with pytest.raises(ScenarioFormatError, match="line 3"):
            read_scenarios(path)

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(json.dumps({"format": "htnet-scenarios", "version": 99}) + "\n")
        with pytest.raises(ScenarioFormatError, match="version"):
            read_scenarios(path)

    def test_empty_file(self, tmp_path):
        (tmp_path / "e.jsonl").write_text("")
        with pytest.raises(ScenarioFormatError):
            read_scenarios(tmp_path / "e.jsonl")
