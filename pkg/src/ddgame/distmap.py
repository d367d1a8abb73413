"""Location-scale distributional maps, the sampling phase, and W1 diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .game import BoxSet, spectral_norm


@dataclass(frozen=True)
class EmpiricalBase:
    """Base noise resampled with replacement from stored records (rows)."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] == 0:
            raise ValueError("empirical base needs at least one record")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def draw(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        idx = rng.integers(self.samples.shape[0], size=size)
        return self.samples[idx].copy()


@dataclass(frozen=True)
class GaussianBase:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        std = np.broadcast_to(np.asarray(self.std, dtype=float), mean.shape).copy()
        if np.any(std < 0):
            raise ValueError("standard deviations must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def draw(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.mean + self.std * rng.standard_normal(shape)


def point_mass(xi0) -> EmpiricalBase:
    return EmpiricalBase(np.atleast_2d(np.asarray(xi0, dtype=float)))


@dataclass(frozen=True)
class LocationScaleMap:
    """z =d xi + B x with xi drawn from ``base``."""

    B: np.ndarray
    base: EmpiricalBase | GaussianBase

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float)).copy()
        if B.shape[0] != self.base.dim:
            raise ValueError(f"B has {B.shape[0]} rows but base noise has dimension {self.base.dim}")
        B.flags.writeable = False
        object.__setattr__(self, "B", B)

    @property
    def k(self) -> int:
        return self.B.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    def with_B(self, B) -> "LocationScaleMap":
        return LocationScaleMap(B, self.base)


def sample_response(dmap: LocationScaleMap, x, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dmap.d,):
        raise ValueError(f"x must have shape ({dmap.d},), got {x.shape}")
    return dmap.base.draw(rng) + dmap.B @ x


def sample_responses(dmap: LocationScaleMap, X, rng: np.random.Generator) -> np.ndarray:
    """Independent responses for each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != dmap.d:
        raise ValueError(f"decisions must have {dmap.d} columns, got {X.shape[1]}")
    return dmap.base.draw(rng, size=X.shape[0]) + X @ dmap.B.T


@dataclass(frozen=True)
class UniformBox:
    """Sampling distribution for deployed decisions: uniform on a box."""

    box: BoxSet

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.box.lo, self.box.hi, size=(size, self.box.dim))

    def covariance(self) -> np.ndarray:
        return np.diag((self.box.hi - self.box.lo) ** 2 / 12.0)

    def second_moment(self) -> np.ndarray:
        """E[x x^T], the Hessian of the least-squares expected risk."""
        c = self.box.center
        return self.covariance() + np.outer(c, c)


@dataclass
class Dataset:
    """Feedback pairs from the sampling phase; row j of X and Z is record j."""

    X: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Z = np.asarray(self.Z, dtype=float)
        if self.Z.ndim == 1:
            self.Z = self.Z[:, None]
        if self.X.shape[0] != self.Z.shape[0] or self.X.shape[0] < 1:
            raise ValueError("dataset needs matching, nonzero record counts")

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return self.Z.shape[1]

    def agent(self, rows) -> "Dataset":
        """Restrict responses to one agent's rows (an int or slice)."""
        if isinstance(rows, int):
            rows = slice(rows, rows + 1)
        return Dataset(self.X, self.Z[:, rows])

    def to_csv(self, path) -> None:
        header = ["j"] + [f"x_{c}" for c in range(self.d)] + [f"z_{c}" for c in range(self.k)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j in range(self.m):
                w.writerow([j] + [format(v, ".17g") for v in self.X[j]] + [format(v, ".17g") for v in self.Z[j]])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        d = sum(1 for h in header if h.startswith("x_"))
        arr = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
        return cls(arr[:, :d], arr[:, d:])


def collect_dataset(
    dmap: LocationScaleMap,
    dist: UniformBox,
    m: int,
    rng: np.random.Generator,
    noiseless: bool = False,
) -> Dataset:
    """Deploy m decisions drawn from ``dist`` and record the system's responses.

    With ``noiseless`` the base draw is replaced by its mean, giving z = E[xi] + B x.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if dist.box.dim != dmap.d:
        raise ValueError("sampling box dimension does not match the map")
    X = dist.draw(rng, m)
    if noiseless:
        mean = dmap.base.mean
        Z = mean + X @ dmap.B.T
    else:
        Z = sample_responses(dmap, X, rng)
    return Dataset(X, Z)


def wasserstein1_1d(a, b) -> float:
    """Exact W1 distance between the empirical measures of two scalar samples.

    Equal sizes reduce to the mean absolute gap between order statistics; for unequal
    sizes the quantile functions are integrated over the merged breakpoints.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("W1 needs nonempty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    levels = np.union1d(np.arange(1, a.size + 1) / a.size, np.arange(1, b.size + 1) / b.size)
    widths = np.diff(np.concatenate([[0.0], levels]))
    mids = levels - 0.5 * widths
    qa = a[np.minimum((mids * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mids * b.size).astype(int), b.size - 1)]
    return float(np.sum(widths * np.abs(qa - qb)))


def estimate_misspecification(
    true_map: LocationScaleMap,
    model_map: LocationScaleMap,
    probe_points,
    m_per_point: int,
    rng: np.random.Generator,
) -> float:
    """Max over probes and response coordinates of the sampled W1 gap between the maps."""
    worst = 0.0
    for x in np.atleast_2d(np.asarray(probe_points, dtype=float)):
        X = np.broadcast_to(x, (m_per_point, x.size))
        zt = sample_responses(true_map, X, rng)
        zm = sample_responses(model_map, X, rng)
        for c in range(zt.shape[1]):
            worst = max(worst, wasserstein1_1d(zt[:, c], zm[:, c]))
    return worst


def sensitivity_constant(box: BoxSet) -> float:
    """W1-Lipschitz constant of B_i -> D_{B_i}(x) over the box: max ||x||.

    Coupling both maps through the same xi gives W1 <= ||(B - B') x|| <= ||B - B'||_F ||x||.
    """
    return box.max_norm()


def map_lipschitz_constant(B_rows) -> float:
    """W1-Lipschitz constant of x -> D_B(x): the spectral norm of the row block."""
    return spectral_norm(B_rows)
