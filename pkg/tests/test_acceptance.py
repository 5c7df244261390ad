"""Acceptance criteria, one test each, at the stated tolerances.

Each test records a one-line pass/fail summary that is repeated in the
"acceptance criteria" section at the end of the pytest run.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from htnet import cli
from htnet.checks import run_grad_checks
from htnet.experiments import monotonicity, noise_sweep, sweep_rows
from htnet.forge import LabelConfig, generate_dataset, generate_raw_scenario, label_scenario
from htnet.forge.maps import MAP_KINDS, random_map
from htnet.forge.scenario import Scenario
from htnet.model import ModelConfig, make_batch
from htnet.model.encoder import SparseAttentionBlock
from htnet.model.losses import maneuver_ce_loss, max_margin_loss, smooth_l1_loss
from htnet.props import entropy_suite, kl_bound_suite
from htnet.scene.frame import rigid_transform, to_local_frame
from htnet.scene.graph import build_lane_graph, dilated_adjacency
from htnet.tensor import Tensor
from htnet.train import TrainConfig, evaluate, train
from oracles import (
    bfs_k_hop,
    brute_force_maneuver,
    randomize,
    reference_attention_block,
    reverse_lists,
    successor_lists,
)

DESK = ModelConfig(d_model=64)


def verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def test_c01_sparse_full_equivalence(report_line):
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for b in range(10):
        block = SparseAttentionBlock(128, 4, 1.0, rng)
        randomize(block, rng, 0.05)
        x = rng.normal(size=(10, 20, 128))
        out, _ = block(Tensor(x))
        for n in range(10):
            worst = max(worst, float(np.abs(out.data[n] - reference_attention_block(block, x[n])).max()))
    dt = time.time() - t0
    ok = worst <= 1e-6 and dt < 60
    report_line(f"[C1] sparse/full equivalence: {verdict(ok)} (100 inputs, max abs diff {worst:.2e}, {dt:.1f}s)")
    assert ok


def test_c02_kl_bound(report_line):
    t0 = time.time()
    suites = kl_bound_suite(draws=1000, lengths=(5, 20), dims=(4, 16), seed=202, tol=1e-9)
    dt = time.time() - t0
    ok = all(s.ok for s in suites) and dt < 60
    detail = "; ".join(f"{s.name} {s.passed}/{s.total}" for s in suites)
    report_line(f"[C2] KL bound suite: {verdict(ok)} ({detail}; {dt:.1f}s)")
    assert ok


def test_c03_entropy(report_line):
    suites = entropy_suite(draws=1000, lengths=(3, 10, 50), seed=303)
    ok = all(s.ok for s in suites)
    detail = "; ".join(f"{s.name} {s.passed}/{s.total}" for s in suites)
    report_line(f"[C3] entropy suite: {verdict(ok)} ({detail}, uniform point included)")
    assert ok


def test_c04_gradient_checks(report_line):
    t0 = time.time()
    checks = run_grad_checks(seed=404, n_coords=100)
    dt = time.time() - t0
    worst = max(c.max_rel_error for c in checks)
    ok = all(c.passed(1e-3) for c in checks) and dt < 600
    names = [c.name for c in checks]
    assert {"loss_max_margin", "loss_traj_ce", "loss_smooth_l1", "loss_lane_bce", "loss_maneuver_ce"} <= set(names)
    report_line(f"[C4] gradient checks: {verdict(ok)} ({len(checks)} layers, worst rel err {worst:.2e}, {dt:.1f}s)")
    for c in checks:
        print("    " + c.line())
    assert ok


def test_c05_overfit(report_line):
    t0 = time.time()
    data = generate_dataset(32, 505)
    cfg = TrainConfig(lr=1e-3, batch_size=8, steps=2000, seed=5, model=DESK)
    status = {}

    def check(step, model):
        if (step + 1) % 250:
            return False
        r = evaluate(model, data).report
        status.update(step=step + 1, ade=r.min_ade_k, acc=r.maneuver_accuracy)
        print(f"    step {step + 1}: minADE_K6 {r.min_ade_k:.3f}, maneuver accuracy {r.maneuver_accuracy:.3f}")
        return r.min_ade_k <= 0.5 and r.maneuver_accuracy >= 0.9

    res = train(data, cfg, callback=check)
    dt = time.time() - t0
    first, last = res.history[0]["total"], res.history[-1]["total"]
    ok = status["ade"] <= 0.5 and status["acc"] >= 0.9 and dt <= 1800 and last < first
    report_line(
        f"[C5] overfit sanity: {verdict(ok)} (steps {status['step']}, minADE_K6 {status['ade']:.3f} m, "
        f"maneuver accuracy {status['acc']:.3f}, loss {first:.2f} -> {last:.2f}, {dt:.0f}s)"
    )
    assert ok


def test_c06_noise_direction(report_line):
    t0 = time.time()
    data = generate_dataset(32, 606)
    probabilities = (0.0, 0.01, 0.03, 0.05, 0.08)
    wins, curves, lines = 0, {"full": [], "vanilla_attention": []}, []
    for seed in range(3):
        models = {
            name: train(data, TrainConfig(steps=1000, seed=seed, model=replace(DESK, ablation=name))).model
            for name in curves
        }
        cells = noise_sweep(models, data, probabilities, "gaussian", trials=5, seed=6000 + seed)
        rows = {(r["model"], r["probability"]): r for r in sweep_rows(cells)}
        ratio = {name: rows[(name, 0.08)]["fdek_increment_ratio"] for name in curves}
        for name in curves:
            curves[name].append([rows[(name, p)]["fdek_mean"] for p in probabilities])
        wins += ratio["full"] <= ratio["vanilla_attention"]
        rho = {name: monotonicity(cells, name) for name in curves}
        lines.append(f"    seed {seed}: increment ratio sparse {ratio['full']:.4f} vs vanilla "
                     f"{ratio['vanilla_attention']:.4f}; spearman sparse {rho['full']:.2f}, "
                     f"vanilla {rho['vanilla_attention']:.2f}")
        print(lines[-1])
    mean_rho = {name: float(spearmanr(probabilities, np.mean(c, axis=0))[0]) for name, c in curves.items()}
    dt = time.time() - t0
    ok = wins >= 2 and min(mean_rho.values()) >= 0.8 and dt <= 7200
    report_line(
        f"[C6] noise-robustness direction: {verdict(ok)} (sparse ratio <= vanilla in {wins}/3 seed groups; "
        f"spearman of seed-mean minFDE_K6 sparse {mean_rho['full']:.2f}, vanilla {mean_rho['vanilla_attention']:.2f}; "
        f"{dt:.0f}s)"
    )
    for line in lines:
        report_line(line)
    assert ok


def test_c07_labeler_oracle(report_line):
    cfg = LabelConfig()
    agents = mismatches = 0
    for sc in generate_dataset(500, 707):
        for i in range(sc.n_agents):
            agents += 1
            mismatches += sc.maneuver_labels[i] != brute_force_maneuver(sc.agents, sc.graph, i, cfg)
    ok = mismatches == 0
    report_line(f"[C7] labeler oracle: {verdict(ok)} ({agents - mismatches}/{agents} agents agree, 500 scenarios)")
    assert ok


def test_c08_graph_invariants(report_line):
    failures = []
    for seed in range(100):
        kit = random_map(800 + seed)
        g = build_lane_graph(kit.lanes, 10.0)
        if not g.merge <= g.overlap:
            failures.append((seed, "merge not in overlap"))
        for name, rel in (("merge", g.merge), ("overlap", g.overlap)):
            if any((j, i) not in rel for i, j in rel):
                failures.append((seed, f"{name} asymmetric"))
        for side in ("left", "right"):
            table = getattr(g, side)
            for i, j in table.items():
                declared = getattr(kit.lane(g.vectors[i].lane_id), side)
                if g.vectors[j].lane_id != declared:
                    failures.append((seed, f"{side} points outside declared lane"))
            if sorted(g.relation(side)) != sorted(set(table.items())) or len({i for i, _ in g.relation(side)}) != len(table):
                failures.append((seed, f"{side} not unique"))
        nxt = successor_lists(kit.lanes, 10.0)
        prv = reverse_lists(nxt)
        for k in range(1, 7):
            if dilated_adjacency(g, k, "succ") != bfs_k_hop(nxt, k) or dilated_adjacency(g, k, "pred") != bfs_k_hop(prv, k):
                failures.append((seed, f"{k}-hop mismatch"))
    ok = not failures
    report_line(f"[C8] graph invariants: {verdict(ok)} (100 random maps, {len(failures)} violations)")
    assert ok, failures[:5]


def test_c09_loss_identities(report_line):
    d = 1e-6
    f = lambda e: smooth_l1_loss(Tensor(np.array([[[[e, 0.0]]]])), np.array([0]), np.zeros((1, 1, 2))).item()  # noqa: E731
    corner = abs(f(1 - d) - f(1 + d))
    p = Tensor(np.array([[0.7, 0.1, 0.2], [0.1, 0.1, 0.8]]))
    jm = max_margin_loss(p, np.array([0, 2]), 0.2).item()
    uniform = maneuver_ce_loss(Tensor(np.full((4, 6), 1 / 6)), np.array([0, 2, 4, 5])).item()
    ok = corner <= 2 * d and jm == 0.0 and abs(uniform - math.log(6)) <= 1e-9
    report_line(
        f"[C9] loss identities: {verdict(ok)} (corner gap {corner:.2e} <= {2 * d:.0e}, J_M {jm}, "
        f"uniform CE - log 6 = {uniform - math.log(6):.1e})"
    )
    assert ok


def _framed_inputs(graph, agents):
    g, a, _ = to_local_frame(graph, agents)
    mane, lanes = label_scenario(g, a)
    b = make_batch([Scenario(g, a, mane, lanes, 0)])
    return b, mane


def test_c10_rigid_invariance(report_line):
    rng = np.random.default_rng(1010)
    worst, label_mismatch = 0.0, 0
    for t in range(50):
        raw = generate_raw_scenario(MAP_KINDS[t % 5], 4, 1000 + t)
        theta = float(rng.uniform(-math.pi, math.pi))
        shift = rng.uniform(-1e3, 1e3, size=2)
        g2, a2 = rigid_transform(raw.graph, raw.agents, theta, shift)
        ref, m1 = _framed_inputs(raw.graph, raw.agents)
        got, m2 = _framed_inputs(g2, a2)
        label_mismatch += m1 != m2
        for key in ("agent_features", "agent_positions", "lane_positions", "futures"):
            worst = max(worst, float(np.abs(getattr(ref, key) - getattr(got, key)).max()))
        dl = ref.lane_features - got.lane_features
        dl[:, 2] = (dl[:, 2] + math.pi) % (2 * math.pi) - math.pi  # heading compared on the circle
        worst = max(worst, float(np.abs(dl).max()))
    ok = worst <= 1e-9 and label_mismatch == 0
    report_line(f"[C10] rigid-transform invariance: {verdict(ok)} (50 transforms, max input diff {worst:.2e})")
    assert ok


def test_c11_reproducible_metrics(tmp_path, report_line):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("model: {d_model: 16, heads: 2, n_sparse_blocks: 1, n_lane_blocks: 1, n_fusion_blocks: 1}\n"
                   "train: {steps: 5, batch_size: 4}\n")
    outputs = []
    for run in ("a", "b"):
        root = tmp_path / run
        base = ["--config", str(cfg), "--seed", "11"]
        assert cli.main(["gen", "--n", "6", "--out", str(root / "data"), *base]) == 0
        assert cli.main(["train", "--data", str(root / "data"), "--out", str(root / "ck"), *base]) == 0
        assert cli.main(["eval", "--checkpoint", str(root / "ck" / "model.npz"), "--data", str(root / "data"),
                         "--out", str(root / "ev"), *base]) == 0
        outputs.append(root)
    same_data = (outputs[0] / "data/scenarios.jsonl").read_bytes() == (outputs[1] / "data/scenarios.jsonl").read_bytes()
    same_metrics = (outputs[0] / "ev/metrics.csv").read_bytes() == (outputs[1] / "ev/metrics.csv").read_bytes()
    ok = same_data and same_metrics
    report_line(f"[C11] reproducibility: {verdict(ok)} (two gen/train/eval runs, metrics CSV byte-identical: {same_metrics})")
    assert ok
