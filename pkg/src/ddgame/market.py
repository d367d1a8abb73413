"""Electric-vehicle charging price competition.

Provider i sets price x_i in [p_w, p_r] and faces scalar demand z_i = xi_i + b_i . x.
Its cost is

    f_i(x, z_i) = -z_i x_i + (lam_i / 2) x_i^2 - p_w phi(w_i - z_i) + p_r phi(z_i - w_i)

with phi the softplus. Base demand xi is an empirical dataset of standardized
station demands.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .game import BoxSet, MonotonicityConstants, PlayerLayout, compute_grad_lipschitz

# artifact defaults, not values taken from the source experiment
DEFAULT_P_W = 0.01
DEFAULT_P_R = 0.5
DEFAULT_B_NOISE_VAR = 1e-5


@dataclass(frozen=True)
class MarketParams:
    n: int
    lam: np.ndarray
    p_w: float
    p_r: float
    w: np.ndarray
    B: np.ndarray
    base_demand: np.ndarray
    price_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        n = int(self.n)
        lam = np.broadcast_to(np.asarray(self.lam, dtype=float), (n,)).copy()
        w = np.broadcast_to(np.asarray(self.w, dtype=float), (n,)).copy()
        B = np.asarray(self.B, dtype=float).copy()
        xi = np.atleast_2d(np.asarray(self.base_demand, dtype=float)).copy()
        if n < 1:
            raise ValueError("need at least one provider")
        if np.any(lam <= 0):
            raise ValueError("regularizers lambda_i must be positive")
        if B.shape != (n, n) or not np.all(np.isfinite(B)):
            raise ValueError(f"B must be a finite {n}x{n} matrix")
        if xi.shape[1] != n or xi.shape[0] == 0:
            raise ValueError(f"base demand must be a nonempty (days, {n}) array")
        if self.price_bounds is None:
            if not 0.0 < self.p_w < self.p_r:
                raise ValueError(f"need 0 < p_w < p_r, got p_w={self.p_w}, p_r={self.p_r}")
        else:
            lo, hi = self.price_bounds
            if not lo <= hi or not 0.0 <= self.p_w <= self.p_r:
                raise ValueError("invalid price bounds or rates")
        for name, arr in (("lam", lam), ("w", w), ("B", B), ("base_demand", xi)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n", n)

    @property
    def box(self) -> BoxSet:
        lo, hi = self.price_bounds if self.price_bounds is not None else (self.p_w, self.p_r)
        return BoxSet.cube(lo, hi, self.n)

    @property
    def layout(self) -> PlayerLayout:
        return PlayerLayout.scalar(self.n)

    def replace(self, **changes) -> "MarketParams":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return MarketParams(**kw)


def softplus(y):
    y = np.asarray(y, dtype=float)
    out = np.maximum(y, 0.0) + np.log1p(np.exp(-np.abs(y)))
    return out if out.ndim else float(out)


def sigmoid(y):
    out = expit(np.asarray(y, dtype=float))
    return out if out.ndim else float(out)


def _check_index(i, params):
    if not 0 <= i < params.n:
        raise IndexError(f"provider index {i} out of range for n = {params.n}")


def cost(i: int, x, z_i, params: MarketParams):
    _check_index(i, params)
    xi_ = np.asarray(x, dtype=float)[..., i]
    lam, w = params.lam[i], params.w[i]
    return (
        -z_i * xi_
        + 0.5 * lam * xi_ * xi_
        - params.p_w * softplus(w - z_i)
        + params.p_r * softplus(z_i - w)
    )


def grad_x(i: int, x, z_i, params: MarketParams):
    """Partial derivative of f_i in x_i at fixed demand."""
    _check_index(i, params)
    return -z_i + params.lam[i] * np.asarray(x, dtype=float)[..., i]


def grad_z(i: int, x, z_i, params: MarketParams):
    """Partial derivative of f_i in z_i."""
    _check_index(i, params)
    w = params.w[i]
    return -np.asarray(x, dtype=float)[..., i] + params.p_w * sigmoid(w - z_i) + params.p_r * sigmoid(z_i - w)


def player_gradient(i: int, x, z_i, B_model, params: MarketParams):
    """Single-sample estimate of grad_i F_i under a location-scale model."""
    b_ii = np.asarray(B_model, dtype=float)[i, i]
    return grad_x(i, x, z_i, params) + b_ii * grad_z(i, x, z_i, params)


def gradient_samples(x, xi, B_model, params: MarketParams, B_draw=None) -> np.ndarray:
    """All players' gradient estimates for each base-demand row of ``xi``.

    Vectorized equivalent of player_gradient with z = xi + B_model x. When
    ``B_draw`` is given, demand is generated by it instead while the gradient
    formula keeps the model's own-price sensitivities b_ii.
    """
    x = np.asarray(x, dtype=float)
    B_model = np.asarray(B_model, dtype=float)
    B_z = B_model if B_draw is None else np.asarray(B_draw, dtype=float)
    z = np.asarray(xi, dtype=float) + B_z @ x
    gx = -z + params.lam * x
    gz = -x + params.p_w * expit(params.w - z) + params.p_r * expit(z - params.w)
    return gx + np.diag(B_model) * gz


def expected_gradient(x, B_model, params: MarketParams) -> np.ndarray:
    """Gradient map of the game, averaging over the base-demand dataset."""
    return gradient_samples(x, params.base_demand, B_model, params).mean(axis=0)


def expected_cost(x, B_model, params: MarketParams) -> np.ndarray:
    """F_i(x) for every provider, averaging over the base-demand dataset."""
    x = np.asarray(x, dtype=float)
    z = params.base_demand + np.asarray(B_model, dtype=float) @ x
    vals = (
        -z * x
        + 0.5 * params.lam * x * x
        - params.p_w * softplus(params.w - z)
        + params.p_r * softplus(z - params.w)
    )
    return vals.mean(axis=0)


def build_B(n: int, noise_std: float = float(np.sqrt(DEFAULT_B_NOISE_VAR)), rng: np.random.Generator | None = None) -> np.ndarray:
    """Response matrix with b_ii = -1/18 + nu and b_ij = 1/18 + nu, nu ~ N(0, noise_std^2)."""
    if n < 1:
        raise ValueError("n must be positive")
    B = np.full((n, n), 1.0 / 18.0)
    np.fill_diagonal(B, -1.0 / 18.0)
    if noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng()
        B = B + rng.normal(0.0, noise_std, size=(n, n))
    return B


def synth_demand(n_stations: int, n_days: int, rng: np.random.Generator) -> np.ndarray:
    """Positive daily demand per station: station level, weekly cycle and AR(1) noise.

    Stand-in for the unavailable charging-station records; only its standardized
    version is ever used.
    """
    if n_days < 2:
        raise ValueError("need at least two days")
    level = rng.uniform(20.0, 80.0, size=n_stations)
    amp = rng.uniform(0.1, 0.3, size=n_stations) * level
    phase = rng.uniform(0.0, 2 * np.pi, size=n_stations)
    phi = 0.6
    scale = 0.15 * level
    days = np.arange(n_days)
    noise = np.empty((n_days, n_stations))
    noise[0] = rng.normal(0.0, scale / np.sqrt(1 - phi**2))
    for t in range(1, n_days):
        noise[t] = phi * noise[t - 1] + rng.normal(0.0, scale)
    seasonal = amp * np.sin(2 * np.pi * days[:, None] / 7.0 + phase)
    return np.maximum(level + seasonal + noise, 0.0)


def standardize(data) -> np.ndarray:
    """Per-column zero mean, unit (population) variance."""
    data = np.asarray(data, dtype=float)
    std = data.std(axis=0)
    if np.any(std == 0):
        raise ValueError("cannot standardize a constant series")
    out = (data - data.mean(axis=0)) / std
    # one correction pass brings mean and variance to rounding level
    return (out - out.mean(axis=0)) / out.std(axis=0)


def write_demand_csv(path, demand) -> None:
    demand = np.atleast_2d(demand)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day"] + [f"station_{s}" for s in range(demand.shape[1])])
        for t, row in enumerate(demand):
            w.writerow([t] + [format(v, ".17g") for v in row])


def read_demand_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(v) for v in r[1:]] for r in rows])


def hessian_bound(params: MarketParams) -> np.ndarray:
    """zeta_i: Lipschitz constant of (x_i, z_i) -> (grad_x f_i, grad_z f_i).

    The Hessian is [[lam_i, -1], [-1, (p_r - p_w) s]] with s = sigmoid' in [0, 1/4];
    its spectral norm is convex in s, so the maximum sits at an endpoint.
    """
    cmax = max(params.p_r - params.p_w, 0.0) / 4.0
    out = []
    for lam in params.lam:
        out.append(max(np.linalg.norm(np.array([[lam, -1.0], [-1.0, c]]), 2) for c in (0.0, cmax)))
    return np.array(out)


def cost_z_lipschitz(params: MarketParams) -> float:
    """Lipschitz constant of z_i -> f_i(x, z_i) over the price box."""
    lo, hi = params.box.lo.min(), params.box.hi.max()
    # grad_z = -x_i + s, with s in [p_w, p_r]
    return float(max(abs(params.p_r - lo), abs(params.p_w - hi)))


def monotonicity_constants(params: MarketParams, B_model) -> MonotonicityConstants:
    """Certificate inputs for the market under response matrix B_model.

    lam = min lam_i, L_i = 1 (grad_x f_i = -z_i + lam_i x_i), gamma_i = ||b_i||, the
    W1-Lipschitz constant of x -> xi + b_i . x obtained by coupling through xi.
    """
    B_model = np.asarray(B_model, dtype=float)
    gammas = np.linalg.norm(B_model, axis=1)
    L = compute_grad_lipschitz(hessian_bound(params), B_model, params.layout)
    return MonotonicityConstants(
        lam=float(params.lam.min()),
        lipschitz_z=np.ones(params.n),
        map_lipschitz=gammas,
        grad_lipschitz=L,
        response_frobenius=float(np.linalg.norm(B_model)),
    )


def squared_row_kappa(params: MarketParams, B_model) -> float:
    """kappa with gamma_i = ||b_i||^2, the literal constant quoted alongside the market."""
    g = np.linalg.norm(np.asarray(B_model, dtype=float), axis=1) ** 2
    return float(np.sqrt(np.sum((g / params.lam.min()) ** 2)))


def default_market(
    n: int = 6,
    rng: np.random.Generator | None = None,
    p_w: float = DEFAULT_P_W,
    p_r: float = DEFAULT_P_R,
    lam: float = 1.0,
    w: float = 0.0,
    b_noise_var: float = DEFAULT_B_NOISE_VAR,
    n_days: int = 365,
) -> MarketParams:
    rng = rng if rng is not None else np.random.default_rng(0)
    demand = standardize(synth_demand(n, n_days, rng))
    B = build_B(n, float(np.sqrt(b_noise_var)), rng)
    return MarketParams(n=n, lam=lam, p_w=p_w, p_r=p_r, w=w, B=B, base_demand=demand)
