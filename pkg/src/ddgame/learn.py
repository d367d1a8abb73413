"""Least-squares ERM for location-scale maps and the associated error bounds."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import linalg

from .distmap import Dataset
from .errors import ERMDiverged, PreconditionFailed, SingularGram

GRAM_COND_LIMIT = 1e12


@dataclass
class HypothesisParams:
    B_hat: np.ndarray
    radius: float | None = None

    @property
    def ell(self) -> int:
        return int(self.B_hat.size)


def project_frobenius(B, radius: float) -> np.ndarray:
    """Euclidean projection of a matrix onto {||B||_F <= radius}."""
    B = np.asarray(B, dtype=float)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    norm = np.linalg.norm(B)
    if norm <= radius:
        return B.copy()
    if radius == 0.0:
        return np.zeros_like(B)
    return B * (radius / norm)


def empirical_risk(B, data: Dataset) -> float:
    R = data.X @ np.asarray(B).T - data.Z
    return 0.5 * float(np.sum(R * R)) / data.m


def risk_gradient(B, data: Dataset) -> np.ndarray:
    """(B X^T X - Z^T X) / m in row-record convention."""
    return (np.asarray(B) @ (data.X.T @ data.X) - data.Z.T @ data.X) / data.m


def fit_least_squares(data: Dataset, radius: float | None = None, ridge: bool = False) -> HypothesisParams:
    """Closed-form ERM B_hat = (Z^T X)(X^T X)^{-1}.

    Raises SingularGram when the Gram matrix is rank deficient or worse conditioned
    than 1e12. ``ridge`` adds 1e-8 * trace/d to the diagonal instead of raising.
    """
    X, Z = data.X, data.Z
    gram = X.T @ X
    d = gram.shape[0]
    if ridge:
        gram = gram + (1e-8 * np.trace(gram) / d) * np.eye(d)
    elif data.m < d:
        raise SingularGram(f"m = {data.m} samples cannot determine d = {d} columns")
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond >= GRAM_COND_LIMIT:
        raise SingularGram(f"Gram matrix condition number {cond:.3g} exceeds {GRAM_COND_LIMIT:.0e}")
    try:
        factor = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularGram("Gram matrix is not positive definite") from exc
    # gram is symmetric: B_hat^T = gram^{-1} X^T Z
    B_hat = linalg.cho_solve(factor, X.T @ Z).T
    if radius is not None:
        B_hat = project_frobenius(B_hat, radius)
    return HypothesisParams(B_hat, radius)


def fit_erm_projected(
    data: Dataset,
    ball_radius: float,
    steps: int = 5000,
    step_size: float | None = None,
    B0=None,
) -> HypothesisParams:
    """Projected gradient descent on the empirical least-squares risk over a Frobenius ball.

    The default step is 1/L with L the top eigenvalue of X^T X / m, which makes the
    risk nonincreasing along the iterates.
    """
    if ball_radius < 0:
        raise ValueError("ball radius must be nonnegative")
    hess = data.X.T @ data.X / data.m
    if step_size is None:
        L = float(np.linalg.eigvalsh(hess)[-1])
        step_size = 1.0 / L if L > 0 else 1.0
    if step_size <= 0:
        raise ValueError("step size must be positive")
    B = np.zeros((data.k, data.d)) if B0 is None else np.asarray(B0, dtype=float).copy()
    B = project_frobenius(B, ball_radius)
    ZX = data.Z.T @ data.X / data.m
    risk0 = empirical_risk(B, data)
    limit = 10.0 * max(risk0, np.finfo(float).tiny)
    for it in range(steps):
        B = project_frobenius(B - step_size * (B @ hess - ZX), ball_radius)
        if it % 50 == 0 or it == steps - 1:
            risk = empirical_risk(B, data)
            if not np.isfinite(risk) or risk > limit:
                raise ERMDiverged(f"risk grew from {risk0:.3g} to {risk:.3g}; reduce the step size")
    return HypothesisParams(B, ball_radius)


def projected_gradient_residual(B, data: Dataset, radius: float, step_size: float) -> float:
    """||B - P(B - s grad)||_F / s; zero exactly at the constrained minimizer."""
    g = risk_gradient(B, data)
    return float(np.linalg.norm(B - project_frobenius(B - step_size * g, radius))) / step_size


def check_sample_size(m: int, ell: int, delta: float) -> bool:
    """m / log(m) >= 2 (ell + log(1/delta)), the precondition of the ERM bound."""
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if m < 2:
        raise ValueError("m must be at least 2")
    return m / math.log(m) >= 2.0 * (ell + math.log(1.0 / delta))


def zeta(m: int, delta: float, ell: int) -> float:
    """sqrt(log(m) (ell + log(1/delta)) / m)."""
    if m < 2:
        raise ValueError("m must be at least 2")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if ell < 1:
        raise ValueError("ell must be positive")
    return math.sqrt(math.log(m) * (ell + math.log(1.0 / delta)) / m)


def erm_constant(mu: float, L_beta: float, r: float, theta: float) -> float:
    """C' = (4 / mu) max(L_beta / (15 r), theta)."""
    if mu <= 0 or r <= 0 or theta <= 0:
        raise ValueError("mu, r and theta must be positive")
    return 4.0 / mu * max(L_beta / (15.0 * r), theta)


def erm_error_bound(m, delta, ell, mu, L_beta, r, theta) -> float:
    """High-probability bound on ||beta_hat - beta*||; requires the sample-size condition."""
    if not check_sample_size(m, ell, delta):
        raise PreconditionFailed(f"m = {m} violates m/log m >= 2(ell + log 1/delta) for ell = {ell}, delta = {delta}")
    return erm_constant(mu, L_beta, r, theta) * zeta(m, delta, ell)


@dataclass
class BoundReport:
    m: int
    delta: float
    ell: int
    zeta: float
    C_prime: float
    erm_bound: float
    approx_bound: float
    excess_risk_bound: float
    sample_size_ok: bool

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "BoundReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        out = {}
        for f in fields(cls):
            raw = kv[f.name]
            if f.name in ("m", "ell"):
                out[f.name] = int(raw)
            elif f.name == "sample_size_ok":
                out[f.name] = raw == "true"
            else:
                out[f.name] = float(raw)
        return cls(**out)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def approx_and_excess_bounds(
    m: int,
    delta: float,
    ell: int,
    mu: float,
    L_beta: float,
    r: float,
    theta: float,
    eta: float,
    eps: float,
    L_z: float,
    L_bar: float,
    diam: float,
) -> BoundReport:
    """Cost-approximation and excess-risk bounds for one agent.

    approx = eta L_z + L_z eps C' zeta
    excess = 2 eta L_z + 2 L_z eps C' zeta + 2 sqrt(2) L_bar diam
    """
    if min(eta, eps, L_z, L_bar, diam) < 0:
        raise ValueError("bound constants must be nonnegative")
    z = zeta(m, delta, ell)
    C = erm_constant(mu, L_beta, r, theta)
    approx = eta * L_z + L_z * eps * C * z
    excess = 2.0 * eta * L_z + 2.0 * L_z * eps * C * z + 2.0 * math.sqrt(2.0) * L_bar * diam
    ok = check_sample_size(m, ell, delta) if delta < 0.5 else False
    return BoundReport(m, delta, ell, z, C, C * z, approx, excess, ok)


def subexponential_modulus(samples, directions=None, rng: np.random.Generator | None = None, n_dirs: int = 64) -> float:
    """Smallest theta with P(|<u, X>| >= t) <= 2 exp(-t / theta) on the empirical law.

    Checked along the coordinate axes, -1/+1 diagonals and ``n_dirs`` random unit
    directions (or the supplied ``directions``); returns the worst case.
    """
    S = np.atleast_2d(np.asarray(samples, dtype=float))
    N, ell = S.shape
    if directions is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        rand = rng.standard_normal((n_dirs, ell))
        directions = np.vstack([np.eye(ell), np.ones((1, ell)), rand])
    U = np.atleast_2d(np.asarray(directions, dtype=float))
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    proj = np.sort(np.abs(S @ U.T), axis=0)[::-1]  # descending per direction
    # the k-th largest value t has empirical survival P(|X| >= t) >= k/N
    surv = np.arange(1, N + 1)[:, None] / N
    theta = proj / np.log(2.0 / surv)
    return float(theta.max())


def calibrate_theta(
    data: Dataset,
    B_star,
    radius: float,
    rng: np.random.Generator,
    n_beta: int = 8,
) -> float:
    """Sub-exponential modulus of the per-record gradient (B x - z) x^T over the ball.

    Evaluated at B_star and ``n_beta`` random points on the sphere of the given radius.
    """
    B_star = np.atleast_2d(np.asarray(B_star, dtype=float))
    betas = [B_star]
    for _ in range(n_beta):
        G = rng.standard_normal(B_star.shape)
        betas.append(G * (radius / np.linalg.norm(G)))
    theta = 0.0
    for B in betas:
        resid = data.X @ B.T - data.Z  # (m, k)
        grads = (resid[:, :, None] * data.X[:, None, :]).reshape(data.m, -1)
        theta = max(theta, subexponential_modulus(grads, rng=rng))
    return theta
