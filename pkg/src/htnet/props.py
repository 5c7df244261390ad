"""Numerical property suites for the query-pruning rule and the entropy argument behind it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model.encoder import kl_to_uniform, m_score


@dataclass
class SuiteResult:
    name: str
    passed: int
    total: int
    worst: float  # largest violation margin seen (<= 0 means every case passed)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def line(self) -> str:
        return f"{self.name}: {self.passed}/{self.total} passed (worst margin {self.worst:.3e})"


def kl_bound_suite(draws: int = 1000, lengths=(5, 20), dims=(4, 16), seed: int = 0, tol: float = 1e-9) -> list[SuiteResult]:
    """Exact KL to the uniform distribution lies in [0, M] for random queries and keys."""
    rng = np.random.default_rng(seed)
    out = []
    for L in lengths:
        for d in dims:
            passed, worst = 0, -math.inf
            for _ in range(draws):
                spread = rng.uniform(0.1, 5.0)
                q = rng.normal(0.0, spread, size=d)
                K = rng.normal(0.0, spread, size=(L, d))
                kl, m = kl_to_uniform(q, K), m_score(q, K)
                margin = max(-tol - kl, kl - m - tol)
                worst = max(worst, margin)
                passed += margin <= 0
            out.append(SuiteResult(f"kl_bound L={L} d={d}", passed, draws, worst))
    return out


def entropy(q: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    nz = q[q > 0]
    return float(-(nz * np.log(nz)).sum())


def entropy_suite(draws: int = 1000, lengths=(3, 10, 50), seed: int = 0) -> list[SuiteResult]:
    """H(q) never exceeds log L on the simplex, and the uniform point attains it."""
    rng = np.random.default_rng(seed)
    out = []
    for L in lengths:
        passed, worst = 0, -math.inf
        for _ in range(draws):
            alpha = rng.choice([0.1, 1.0, 10.0])
            q = rng.dirichlet(np.full(L, alpha))
            margin = entropy(q) - math.log(L) - 1e-12
            worst = max(worst, margin)
            passed += margin <= 0
        u_gap = abs(entropy(np.full(L, 1.0 / L)) - math.log(L)) - 1e-9
        worst = max(worst, u_gap)
        passed += u_gap <= 0
        out.append(SuiteResult(f"entropy L={L}", passed, draws + 1, worst))
    return out


def expectation_suite(draws: int = 200, L: int = 8, d: int = 4, seed: int = 0) -> SuiteResult:
    """A softmax attention row equals the expectation of V under p(k_j | q_i)."""
    rng = np.random.default_rng(seed)
    passed, worst = 0, -math.inf
    for _ in range(draws):
        Q, K, V = (rng.normal(size=(L, d)) for _ in range(3))
        s = Q @ K.T / math.sqrt(d)
        w = np.exp(s - s.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        rows = w @ V
        for i in range(L):
            f = np.exp(Q[i] @ K.T / math.sqrt(d))
            p = f / f.sum()
            expect = sum(p[j] * V[j] for j in range(L))
            margin = float(np.abs(rows[i] - expect).max()) - 1e-12
            worst = max(worst, margin)
            passed += margin <= 0
    return SuiteResult(f"expectation L={L} d={d}", passed, draws * L, worst)


def run_all(seed: int = 0) -> list[SuiteResult]:
    return kl_bound_suite(seed=seed) + entropy_suite(seed=seed) + [expectation_suite(seed=seed)]
