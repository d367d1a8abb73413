"""Weighted-projection stochastic gradient play and its convergence diagnostics."""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import market
from .errors import NonConvergence
from .game import BoxSet, StepWeights, project_box


class BoundContractWarning(UserWarning):
    """A bound was evaluated outside the hypotheses under which it holds."""


@dataclass(frozen=True)
class ConstantStep:
    weights: StepWeights


@dataclass(frozen=True)
class Decaying:
    """omega_t = alpha (r + t - 2) / 2, shared by all players."""

    alpha: float
    r: float = 3.0

    def __post_init__(self):
        if self.r <= 2:
            raise ValueError(f"decaying schedule needs r > 2, got {self.r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class SolverConfig:
    mode: ConstantStep | Decaying
    iterations: int
    x0: np.ndarray
    batch: int = 1
    seed: int | np.random.SeedSequence = 0
    log_stride: int = 1
    log_residuals: bool = True

    def with_seed(self, seed) -> "SolverConfig":
        return replace(self, seed=seed)


# --- gradient feeds -------------------------------------------------------------
# A feed maps (x, t, rng, batch) to a gradient estimate; ``expected(x)`` returns the
# exact gradient map when available (used for residual logging).


@dataclass(frozen=True)
class DeterministicFeed:
    G: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x, t, rng, batch=1):
        return self.G(x)

    def expected(self, x):
        return self.G(x)


@dataclass(frozen=True)
class MarketFeed:
    """Gradient estimates for the EV game under the model response matrix ``B_model``.

    Stochastic mode averages ``batch`` base-demand draws. Demand is generated by
    ``B_draw`` (defaults to the model itself); passing the true matrix measures the
    effect of model error while the gradient formula keeps the model's b_ii.
    """

    params: market.MarketParams
    B_model: np.ndarray
    stochastic: bool = True
    B_draw: np.ndarray | None = None

    def _samples(self, x, xi):
        return market.gradient_samples(x, xi, self.B_model, self.params, self.B_draw)

    def __call__(self, x, t, rng, batch=1):
        xi = self.params.base_demand
        if not self.stochastic:
            return self._samples(x, xi).mean(axis=0)
        idx = rng.integers(xi.shape[0], size=batch)
        return self._samples(x, xi[idx]).mean(axis=0)

    def expected(self, x):
        return self._samples(x, self.params.base_demand).mean(axis=0)

    def variance(self, x, batch=1) -> float:
        """Exact E||g - E g||^2 of a batch estimate at x under the empirical base."""
        if not self.stochastic:
            return 0.0
        S = self._samples(x, self.params.base_demand)
        return float(np.mean(np.sum((S - S.mean(axis=0)) ** 2, axis=1))) / batch


@dataclass(frozen=True)
class BiasedFeed:
    """Wraps a feed and adds a deterministic bias rho_bar / (s + t) along ``direction``."""

    inner: object
    rho_bar: float
    s: float
    direction: np.ndarray

    def __call__(self, x, t, rng, batch=1):
        u = np.asarray(self.direction, dtype=float)
        u = u / np.linalg.norm(u)
        return self.inner(x, t, rng, batch) + self.rho_bar / (self.s + t) * u

    def expected(self, x):
        return self.inner.expected(x)


# --- iteration ------------------------------------------------------------------


def omega_t(alpha: float, r: float, t: int) -> float:
    if r <= 2:
        raise ValueError(f"r must exceed 2, got {r}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return alpha * (r + t - 2) / 2.0


def step(x, g, scale, box: BoxSet) -> np.ndarray:
    """x' = proj(x - W^{-1} g) for a scalar omega, per-coordinate weights, or StepWeights."""
    if isinstance(scale, StepWeights):
        w = scale.omegas
    else:
        w = np.asarray(scale, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("step scale must be positive")
    return project_box(np.asarray(x, dtype=float) - np.asarray(g, dtype=float) / w, box)


def natural_residual(x, G, box: BoxSet, omega=1.0) -> float:
    """||x - proj(x - G(x)/omega)||, zero exactly at solutions of the VI."""
    return float(np.linalg.norm(x - step(x, G(x), omega, box)))


@dataclass
class Trajectory:
    iterates: np.ndarray
    errors: np.ndarray | None
    residuals: np.ndarray
    log_stride: int = 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.iterates.shape[0]) * self.log_stride


def _coordinate_weights(mode, box: BoxSet) -> np.ndarray | None:
    if isinstance(mode, ConstantStep):
        w = mode.weights.omegas
        if w.size != box.dim:
            raise ValueError(f"{w.size} step weights for a {box.dim}-dimensional decision")
        return w
    return None


def solve(config: SolverConfig, feed, box: BoxSet, x_ref=None) -> Trajectory:
    """Run gradient play for ``config.iterations`` steps from ``config.x0``.

    Logged quantities at every ``log_stride``-th step: the iterate, the squared
    distance to ``x_ref`` and the unit-step natural residual of the exact gradient map.
    """
    x = np.asarray(config.x0, dtype=float).copy()
    if not box.contains(x):
        raise ValueError("initial point must be feasible")
    rng = np.random.default_rng(config.seed)
    weights = _coordinate_weights(config.mode, box)
    has_mean = config.log_residuals and hasattr(feed, "expected")
    ref = None if x_ref is None else np.asarray(x_ref, dtype=float)

    iterates, errors, residuals = [], [], []

    def log(x):
        iterates.append(x.copy())
        if ref is not None:
            diff = x - ref
            errors.append(float(diff @ diff))
        residuals.append(natural_residual(x, feed.expected, box) if has_mean else math.nan)

    for t in range(config.iterations):
        if t % config.log_stride == 0:
            log(x)
        g = feed(x, t, rng, config.batch)
        omega = weights if weights is not None else omega_t(config.mode.alpha, config.mode.r, t)
        x = step(x, g, omega, box)
    if config.iterations % config.log_stride == 0:
        log(x)
    return Trajectory(
        np.array(iterates),
        np.array(errors) if ref is not None else None,
        np.array(residuals),
        config.log_stride,
    )


def trial_seeds(master_seed: int, trials: int) -> list[np.random.SeedSequence]:
    """Independent per-trial seeds: SeedSequence(master_seed).spawn(trials)."""
    return np.random.SeedSequence(master_seed).spawn(trials)


def _run_one(args):
    config, feed, box, x_ref = args
    return solve(config, feed, box, x_ref)


def run_trials(config: SolverConfig, feed, box: BoxSet, trials: int, master_seed: int, x_ref=None, workers: int = 1) -> list[Trajectory]:
    """Independent trials ordered by trial index, optionally on a process pool."""
    jobs = [(config.with_seed(s), feed, box, x_ref) for s in trial_seeds(master_seed, trials)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def reference_nash(G, box: BoxSet, omega: float, tol: float = 1e-10, max_iter: int = 1_000_000, x0=None) -> np.ndarray:
    """Deterministic constant-step gradient play until ||x - proj(x - G(x)/omega)|| <= tol."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    x = box.center.copy() if x0 is None else project_box(x0, box)
    for _ in range(max_iter):
        x_new = step(x, G(x), omega, box)
        if np.linalg.norm(x - x_new) <= tol:
            return x
        x = x_new
    raise NonConvergence(f"no convergence within {max_iter} iterations; is the game certified?")


def certified_omega(alpha: float, L: float) -> float:
    """Smallest uniform rate passing the step condition: 4 L^2 / alpha."""
    return 4.0 * L * L / alpha


# --- bound calculators ------------------------------------------------------------


def check_step_condition(weights: StepWeights, alpha: float, L: float) -> bool:
    """omega_1 / omega_n^2 <= alpha / (4 L^2)."""
    return weights.omega_max / weights.omega_min**2 <= alpha / (4.0 * L * L)


def contraction_factor(weights: StepWeights, alpha: float) -> float:
    return weights.omega_max / (weights.omega_min + alpha)


def neighborhood_bound(weights: StepWeights, alpha: float, rho: float, sigma: float) -> float:
    """Limit-superior bound on E||x^t - x_hat||^2 under bias rho and noise std sigma.

    Warns (BoundContractWarning) when omega_1 - omega_n >= alpha, where the value is
    returned for diagnostics only.
    """
    w1, wn = weights.omega_max, weights.omega_min
    if w1 - wn >= alpha:
        warnings.warn(f"omega_1 - omega_n = {w1 - wn:.3g} >= alpha = {alpha:.3g}", BoundContractWarning, stacklevel=2)
    return 2.0 * w1 * (w1 * rho**2 + alpha * sigma**2) / (alpha * wn * (wn + alpha))


def decaying_rate_constant(alpha: float, r: float, e0: float, sigma: float, rho_bar: float = 0.0, s: float = 1.0) -> float:
    """A with E||x^t - x*||^2 <= A / (alpha^2 (r + t)); e0 = ||x^0 - x*||^2."""
    return max(alpha**2 * r * e0, 4.0 * rho_bar**2 * max(r / s, 1.0) + 8.0 * r * sigma**2 / (r - 2.0))


def measured_sigma(feed, points, batch: int = 1, rng: np.random.Generator | None = None, samples: int = 2000) -> float:
    """sqrt of the largest gradient-noise variance over ``points``.

    Exact when the feed exposes ``variance``; otherwise a Monte-Carlo estimate.
    """
    worst = 0.0
    for x in np.atleast_2d(points):
        if hasattr(feed, "variance"):
            v = feed.variance(x, batch)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            g = np.array([feed(x, 0, rng, batch) for _ in range(samples)])
            v = float(np.mean(np.sum((g - g.mean(axis=0)) ** 2, axis=1)))
        worst = max(worst, v)
    return math.sqrt(worst)


@dataclass
class RateReport:
    trials: int
    t_min: int
    sup_scaled: float
    slope: float
    first_quartile_max: float
    last_quartile_max: float
    no_upward_trend: bool
    A_over_alpha_sq: float | None = None

    def lines(self) -> list[str]:
        return [f"{k}={v}" for k, v in self.__dict__.items()]


def rate_check(
    trajectories,
    alpha: float,
    r: float,
    t_min: int = 100,
    A: float | None = None,
    min_trials: int = 10,
) -> RateReport:
    """Decaying-step diagnostics on the trial-mean squared error.

    sup_scaled is max_{t >= t_min} (r + t) mean_e(t); the trend test compares the
    max of (r + t) mean_e(t) over the last quarter of logged steps with twice the
    max over the first quarter; slope is the least-squares log-log slope.
    """
    trajectories = list(trajectories)
    if len(trajectories) < min_trials:
        raise ValueError(f"rate check needs at least {min_trials} trials, got {len(trajectories)}")
    E = np.array([tr.errors for tr in trajectories])
    t = trajectories[0].t.astype(float)
    mean_e = E.mean(axis=0)
    sel = (t >= t_min) & (mean_e > 0)
    ts, es = t[sel], mean_e[sel]
    scaled = (r + ts) * es
    q = max(1, len(ts) // 4)
    first, last = float(scaled[:q].max()), float(scaled[-q:].max())
    slope = float(np.polyfit(np.log(ts), np.log(es), 1)[0])
    return RateReport(
        trials=len(trajectories),
        t_min=t_min,
        sup_scaled=float(scaled.max()),
        slope=slope,
        first_quartile_max=first,
        last_quartile_max=last,
        no_upward_trend=last <= 2.0 * first,
        A_over_alpha_sq=None if A is None else A / alpha**2,
    )


# --- CSV export ---------------------------------------------------------------------


def write_trajectories_csv(path, trajectories) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "t", "error_sq", "residual"])
        for k, tr in enumerate(trajectories):
            errs = tr.errors if tr.errors is not None else np.full(len(tr.t), math.nan)
            for t, e, res in zip(tr.t, errs, tr.residuals):
                w.writerow([k, int(t), format(e, ".17g"), format(res, ".17g")])


def read_trajectories_csv(path) -> dict[int, dict[str, np.ndarray]]:
    out: dict[int, dict[str, list]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            d = out.setdefault(int(row["trial"]), {"t": [], "error_sq": [], "residual": []})
            d["t"].append(int(row["t"]))
            d["error_sq"].append(float(row["error_sq"]))
            d["residual"].append(float(row["residual"]))
    return {k: {c: np.array(v) for c, v in d.items()} for k, d in out.items()}
