"""Block-structured decisions, box projections and monotonicity constants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import KappaTooLarge


@dataclass(frozen=True)
class PlayerLayout:
    """Partition of a joint decision vector into per-player blocks."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise ValueError(f"player dims must be positive, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def scalar(cls, n: int) -> "PlayerLayout":
        return cls((1,) * n)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def d(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.dims)[:-1]]))

    def block(self, i: int) -> slice:
        start = self.offsets[i]
        return slice(start, start + self.dims[i])

    def split(self, x):
        x = np.asarray(x)
        return [x[self.block(i)] for i in range(self.n)]

    def expand(self, per_player) -> np.ndarray:
        """Repeat one value per player across that player's coordinates."""
        per_player = np.asarray(per_player, dtype=float)
        if per_player.shape != (self.n,):
            raise ValueError(f"expected {self.n} per-player values, got shape {per_player.shape}")
        return np.repeat(per_player, self.dims)


@dataclass(frozen=True)
class BoxSet:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box is empty: some lo[j] > hi[j]")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, d: int) -> "BoxSet":
        return cls(np.full(d, lo), np.full(d, hi))

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def max_norm(self) -> float:
        """Largest Euclidean norm of a point in the box (attained at a vertex)."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))


@dataclass(frozen=True)
class StepWeights:
    """Per-player step rates; the update uses 1/omega_i as player i's step size."""

    omegas: np.ndarray

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omegas, dtype=float)).copy()
        if om.ndim != 1 or om.size == 0:
            raise ValueError("omegas must be a non-empty 1-D sequence")
        if np.any(~np.isfinite(om)) or np.any(om <= 0):
            raise ValueError(f"step weights must be positive, got {om}")
        om.flags.writeable = False
        object.__setattr__(self, "omegas", om)

    @classmethod
    def uniform(cls, omega: float, n: int) -> "StepWeights":
        return cls(np.full(n, float(omega)))

    @property
    def omega_max(self) -> float:
        return float(self.omegas.max())

    @property
    def omega_min(self) -> float:
        return float(self.omegas.min())

    def diagonal(self, layout: PlayerLayout | None = None) -> np.ndarray:
        """Diagonal of W, one entry per coordinate of the joint decision."""
        if layout is None:
            return self.omegas.copy()
        if layout.n != self.omegas.size:
            raise ValueError(f"{self.omegas.size} weights for {layout.n} players")
        return layout.expand(self.omegas)


def project_box(x, box: BoxSet) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != box.dim:
        raise ValueError(f"dimension mismatch: x has {x.shape[-1]} coords, box has {box.dim}")
    return np.minimum(np.maximum(x, box.lo), box.hi)


def project_weighted(x, box: BoxSet, weights: StepWeights, layout: PlayerLayout | None = None) -> np.ndarray:
    """argmin_{y in box} 0.5 * ||x - y||_W^2 for W = diag(weights expanded over layout).

    The objective is separable across coordinates with positive curvature, so each
    coordinate is minimized by its own clamp regardless of the weight.
    """
    w = weights.diagonal(layout)
    x = np.asarray(x, dtype=float)
    if w.size != x.shape[-1]:
        raise ValueError(f"weights cover {w.size} coords, x has {x.shape[-1]}")
    return project_box(x, box)


def weighted_sq_norm(v, w) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sum(np.asarray(w, dtype=float) * v * v))


def spectral_norm(A, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on A^T A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0 or not np.any(A):
        return 0.0
    M = A.T @ A
    # deterministic start with full support so no eigendirection is missed
    v = np.linspace(1.0, 2.0, M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = M @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            # v orthogonal to the range; restart along the largest column
            v = M[:, np.argmax(np.linalg.norm(M, axis=0))]
            v = v / np.linalg.norm(v)
            continue
        lam_new = float(v @ u)
        v = u / nu
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


@dataclass(frozen=True)
class MonotonicityConstants:
    """Inputs to the strong-monotonicity certificate of a decision-dependent game.

    lam           modulus of the decoupled gradient x -> G(x, y)
    lipschitz_z   L_i, Lipschitz constant of z_i -> grad_i f_i(x, z_i)
    map_lipschitz gamma_i, W1-Lipschitz constant of y -> D_i(y)
    grad_lipschitz  Lipschitz constant of the full gradient map, when known
    """

    lam: float
    lipschitz_z: Sequence[float]
    map_lipschitz: Sequence[float]
    grad_lipschitz: float | None = None
    response_frobenius: float | None = None

    @property
    def kappa(self) -> float:
        return compute_kappa(self)

    @property
    def alpha(self) -> float:
        return compute_alpha(self.kappa, self.lam)

    @property
    def alpha_frobenius(self) -> float | None:
        if self.response_frobenius is None:
            return None
        return frobenius_alpha(self.response_frobenius, self.lam)

    @property
    def alpha_conservative(self) -> float:
        """Smaller of the kappa-based modulus and the Frobenius variant (when available)."""
        a = self.alpha
        af = self.alpha_frobenius
        return a if af is None else min(a, af)


def compute_kappa(constants: MonotonicityConstants) -> float:
    lam = float(constants.lam)
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    L = np.asarray(constants.lipschitz_z, dtype=float)
    g = np.asarray(constants.map_lipschitz, dtype=float)
    if L.shape != g.shape:
        raise ValueError("lipschitz_z and map_lipschitz must have one entry per player")
    if np.any(L < 0) or np.any(g < 0):
        raise ValueError("Lipschitz constants must be nonnegative")
    return float(np.sqrt(np.sum((g * L / lam) ** 2)))


def compute_alpha(kappa: float, lam: float) -> float:
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if kappa >= 0.5:
        raise KappaTooLarge(f"kappa = {kappa:.6g} >= 1/2")
    return (1.0 - 2.0 * kappa) * lam


def frobenius_alpha(b_frobenius: float, lam: float) -> float:
    """(1 - 2 ||B||_F) * lambda, the modulus quoted for the EV market.

    Not implied by compute_alpha in general; callers take the minimum of the two.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if b_frobenius >= 0.5:
        raise KappaTooLarge(f"||B||_F = {b_frobenius:.6g} >= 1/2")
    return (1.0 - 2.0 * b_frobenius) * lam


def compute_grad_lipschitz(zetas, B, layout: PlayerLayout, response_dims: Sequence[int] | None = None) -> float:
    """sqrt(sum_i zeta_i^2 max(1, ||B_i^i||^2) (1 + ||B_i||^2)) with spectral norms.

    ``B`` stacks one row block per player; ``response_dims`` gives the block heights
    (defaults to one row per player).
    """
    zetas = np.asarray(zetas, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if zetas.shape != (layout.n,):
        raise ValueError(f"need {layout.n} zeta values, got shape {zetas.shape}")
    if np.any(zetas < 0):
        raise ValueError("zeta values must be nonnegative")
    if response_dims is None:
        response_dims = (1,) * layout.n
    rows = PlayerLayout(tuple(response_dims))
    if rows.n != layout.n or B.shape != (rows.d, layout.d):
        raise ValueError(f"B has shape {B.shape}, expected {(rows.d, layout.d)}")
    total = 0.0
    for i in range(layout.n):
        Bi = B[rows.block(i), :]
        Bii = Bi[:, layout.block(i)]
        total += zetas[i] ** 2 * max(1.0, spectral_norm(Bii) ** 2) * (1.0 + spectral_norm(Bi) ** 2)
    return float(np.sqrt(total))
