"""Independent reference computations used to validate the main modules.

Nothing here imports the market, learning or solver code: cost and gradient formulas
are written out again from scratch so that agreement is evidence, not tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BestResponseCycle, NumericalError


def finite_diff(f, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out


def _softplus(y: float) -> float:
    if y > 30.0:
        return y + math.exp(-y)
    return math.log(1.0 + math.exp(y))


def ev_cost(x_i: float, z: float, lam: float, p_w: float, p_r: float, w: float) -> float:
    """Scalar EV provider cost, written independently of the market module."""
    service = lam * x_i * x_i / 2.0 - z * x_i
    return service - p_w * _softplus(w - z) + p_r * _softplus(z - w)


def ev_expected_costs(x, B, xi, lam, p_w, p_r, w) -> np.ndarray:
    """Per-provider expected EV cost over an empirical base-demand table."""
    x = np.asarray(x, dtype=float)
    n = x.size
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    w = np.broadcast_to(np.asarray(w, dtype=float), (n,))
    z = np.asarray(xi, dtype=float) + np.einsum("ij,j->i", np.asarray(B, dtype=float), x)
    vals = lam * x**2 / 2.0 - z * x - p_w * np.logaddexp(0.0, w - z) + p_r * np.logaddexp(0.0, z - w)
    return vals.mean(axis=0)


def ev_grid_evaluator(B, xi, lam, p_w, p_r, w):
    """Best-response evaluator for grid_nash on the two-player EV game."""
    B = np.asarray(B, dtype=float)
    xi = np.asarray(xi, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (2,))
    w = np.broadcast_to(np.asarray(w, dtype=float), (2,))

    def evaluator(i, candidates, profile):
        other = 1 - i
        c = np.asarray(candidates, dtype=float)[:, None]
        z = xi[None, :, i] + B[i, i] * c + B[i, other] * profile[other]
        vals = lam[i] * c**2 / 2.0 - z * c - p_w * np.logaddexp(0.0, w[i] - z) + p_r * np.logaddexp(0.0, z - w[i])
        return vals.mean(axis=1)

    return evaluator


@dataclass(frozen=True)
class QuadraticGameSpec:
    """EV game with p_w = p_r = 0: cost lam_i x_i^2 / 2 - z_i x_i, z = xi + B x."""

    n: int
    lam: np.ndarray
    B: np.ndarray
    xi_bar: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.lam) <= 0):
            raise ValueError("lambda_i must be positive")

    def gradient(self, x) -> np.ndarray:
        """G_i(x) = lam_i x_i - xi_bar_i - b_i . x - b_ii x_i, written out by loops."""
        x = [float(v) for v in x]
        out = []
        for i in range(self.n):
            bx = sum(float(self.B[i][j]) * x[j] for j in range(self.n))
            out.append(float(self.lam[i]) * x[i] - float(self.xi_bar[i]) - bx - float(self.B[i][i]) * x[i])
        return np.array(out)


def closed_form_nash(spec: QuadraticGameSpec, grid_evaluator=None, resolution: int = 10_000) -> np.ndarray:
    """Solve (diag(lam) - B - diag(b_ii)) x = xi_bar; must land strictly inside the box.

    Falls back to grid_nash (two players only) when the solution leaves the box.
    """
    B = np.asarray(spec.B, dtype=float)
    A = np.diag(np.asarray(spec.lam, dtype=float)) - B - np.diag(np.diag(B))
    try:
        x = np.linalg.solve(A, np.asarray(spec.xi_bar, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("quadratic game system is singular") from exc
    lo, hi = np.asarray(spec.lo), np.asarray(spec.hi)
    if np.all(x > lo) and np.all(x < hi):
        return x
    if spec.n != 2:
        raise NumericalError("closed-form solution leaves the box and no fallback exists for n != 2")

    def evaluator(i, candidates, profile):
        lam, b = float(spec.lam[i]), B[i]
        other = 1 - i
        z = spec.xi_bar[i] + b[i] * candidates + b[other] * profile[other]
        return lam * candidates**2 / 2.0 - z * candidates

    return grid_nash(grid_evaluator or evaluator, lo, hi, resolution)


def grid_nash(evaluator, lo, hi, resolution: int = 10_000, max_rounds: int = 10_000) -> np.ndarray:
    """Simultaneous best response on a grid of ``resolution`` cells per player.

    ``evaluator(i, candidates, profile)`` returns player i's expected cost for each
    candidate value of x_i with the others held at ``profile``. Ties go to the
    lowest grid index. Stops at a grid fixed point; raises BestResponseCycle when a
    profile repeats without being fixed.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != (2,) or hi.shape != (2,):
        raise ValueError("grid_nash handles exactly two scalar players")
    if resolution < 100:
        raise ValueError("resolution must be at least 100")
    grids = [np.linspace(lo[i], hi[i], resolution + 1) for i in range(2)]
    idx = (resolution // 2, resolution // 2)
    seen = {idx: 0}
    for rnd in range(1, max_rounds + 1):
        profile = np.array([grids[0][idx[0]], grids[1][idx[1]]])
        new = tuple(int(np.argmin(evaluator(i, grids[i], profile))) for i in range(2))
        if new == idx:
            return profile
        if new in seen:
            raise BestResponseCycle(rnd - seen[new])
        seen[new] = rnd
        idx = new
    raise BestResponseCycle(max_rounds)


def brute_force_lipschitz(G, pairs) -> float:
    """Largest ||G(x) - G(y)|| / ||x - y|| over the given (x, y) pairs."""
    best = 0.0
    for x, y in pairs:
        dx = np.linalg.norm(np.asarray(x) - np.asarray(y))
        if dx > 0:
            best = max(best, float(np.linalg.norm(G(x) - G(y)) / dx))
    return best
