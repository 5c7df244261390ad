"""Central-difference gradient checking against the tape."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tape, Tensor, backpropagate


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_index: int | None
    n_checked: int
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def passed(self, tol: float) -> bool:
        return self.ok and self.max_rel_error <= tol


def finite_difference_check(
    f: Callable[[], Tensor],
    x: Tensor,
    step: float = 1e-5,
    n_coords: int | None = 100,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """Compare the analytic gradient of ``f`` w.r.t. ``x`` with central differences.

    ``f`` takes no arguments and must read ``x`` (which is perturbed in place
    between calls). The error per coordinate is
    ``|g_a - g_n| / max(1, |g_a|, |g_n|)``; coordinates are sampled without
    replacement when ``n_coords`` is smaller than ``x.size``.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    was = x.requires_grad
    x.requires_grad = True
    x.grad = None
    try:
        with Tape() as tape:
            out = f()
        if out.size != 1:
            raise ValueError(f"f must be scalar-valued, got shape {out.shape}")
        backpropagate(tape, out, leaves=[x])
        analytic = x.grad.reshape(-1).copy()
    finally:
        x.requires_grad = was
        x.grad = None

    flat = x.data.reshape(-1)
    if n_coords is None or n_coords >= flat.size:
        coords = np.arange(flat.size)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        coords = np.sort(rng.choice(flat.size, size=n_coords, replace=False))

    failures = []
    worst, worst_idx = 0.0, None
    for i in coords:
        orig = flat[i]
        flat[i] = orig + step
        fp = f().item()
        flat[i] = orig - step
        fm = f().item()
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            failures.append(f"non-finite f at coordinate {int(i)}")
            continue
        numeric = (fp - fm) / (2.0 * step)
        ga = analytic[i]
        err = abs(ga - numeric) / max(1.0, abs(ga), abs(numeric))
        if err > worst:
            worst, worst_idx = err, int(i)
    return GradCheckResult(worst, worst_idx, len(coords), failures)
