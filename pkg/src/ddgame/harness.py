"""Experiment configuration and the sample -> learn -> solve pipeline.

Config files are INI-style: ``[section]`` headers and ``key = value`` lines, with
arrays written comma-separated. Every key is optional; see DEFAULT_CONFIG.
"""

from __future__ import annotations

import configparser
import csv
import math
import time
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import distmap, learn, market, solver
from .errors import ConfigError
from .game import BoxSet, StepWeights

DEFAULT_CONFIG = """\
[market]
n = 6
lambda = 1.0
p_w = 0.01
p_r = 0.5
w = 0.0
b_noise_var = 1e-5
n_days = 365
seed = 0

[sampling]
m = 20000
# decision box for the sampling phase; empty means the market price box.
# A wide exploration box keeps the learned response matrix accurate enough to
# retain the strong-monotonicity certificate.
lo = 0.0
hi = 10.0
noise = empirical
seed = 1

[learning]
method = lstsq
radius = 1.0
delta = 0.1
steps = 5000

[solver]
mode = decaying
r = 3.0
# empty alpha means the certified modulus of the learned game
alpha =
omega =
iterations = 2000
batch = 1
draw_from = model
log_stride = 1

[experiment]
trials = 50
seed = 2
workers = 1
output_dir = out
"""


@dataclass
class MarketConfig:
    n: int = 6
    lam: list[float] = field(default_factory=lambda: [1.0])
    p_w: float = market.DEFAULT_P_W
    p_r: float = market.DEFAULT_P_R
    w: list[float] = field(default_factory=lambda: [0.0])
    b_noise_var: float = market.DEFAULT_B_NOISE_VAR
    n_days: int = 365
    seed: int = 0


@dataclass
class SamplingConfig:
    m: int = 20000
    lo: list[float] | None = field(default_factory=lambda: [0.0])
    hi: list[float] | None = field(default_factory=lambda: [10.0])
    noise: str = "empirical"
    seed: int = 1


@dataclass
class LearningConfig:
    method: str = "lstsq"
    radius: float = 1.0
    delta: float = 0.1
    steps: int = 5000


@dataclass
class SolverSection:
    mode: str = "decaying"
    r: float = 3.0
    alpha: float | None = None
    omega: list[float] | None = None
    iterations: int = 2000
    batch: int = 1
    draw_from: str = "model"
    log_stride: int = 1


@dataclass
class ExperimentConfig:
    market: MarketConfig = field(default_factory=MarketConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    solver: SolverSection = field(default_factory=SolverSection)
    trials: int = 50
    seed: int = 2
    workers: int = 1
    output_dir: str = "out"

    def with_master_seed(self, seed: int) -> "ExperimentConfig":
        """Derive every per-section seed from one master seed."""
        a, b, c = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3))
        return replace(
            self,
            market=replace(self.market, seed=a),
            sampling=replace(self.sampling, seed=b),
            seed=c,
        )

    def validate(self) -> "ExperimentConfig":
        m, s, l, v = self.market, self.sampling, self.learning, self.solver
        checks = [
            (m.n >= 1, "market.n must be positive"),
            (0 < m.p_w < m.p_r, "market needs 0 < p_w < p_r"),
            (all(x > 0 for x in m.lam), "market.lambda must be positive"),
            (len(m.lam) in (1, m.n) and len(m.w) in (1, m.n), "market.lambda and market.w need 1 or n entries"),
            (m.b_noise_var >= 0, "market.b_noise_var must be nonnegative"),
            (m.n_days >= 2, "market.n_days must be at least 2"),
            (s.m >= 1, "sampling.m must be positive"),
            (s.noise in ("empirical", "none"), "sampling.noise must be 'empirical' or 'none'"),
            ((s.lo is None) == (s.hi is None), "sampling.lo and sampling.hi go together"),
            (l.method in ("lstsq", "pgd"), "learning.method must be 'lstsq' or 'pgd'"),
            (l.radius > 0, "learning.radius must be positive"),
            (0 < l.delta < 0.5, "learning.delta must lie in (0, 1/2)"),
            (v.mode in ("decaying", "constant"), "solver.mode must be 'decaying' or 'constant'"),
            (v.r > 2, "solver.r must exceed 2"),
            (v.alpha is None or v.alpha > 0, "solver.alpha must be positive"),
            (v.iterations >= 1 and v.batch >= 1 and v.log_stride >= 1, "solver counts must be positive"),
            (v.draw_from in ("model", "truth"), "solver.draw_from must be 'model' or 'truth'"),
            (self.trials >= 1, "experiment.trials must be positive"),
            (self.workers >= 0, "experiment.workers must be nonnegative (0 means one per core)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if v.omega is not None and len(v.omega) not in (1, m.n):
            raise ConfigError("solver.omega needs 1 or n entries")
        if s.lo is not None and (len(s.lo) not in (1, m.n) or len(s.hi) not in (1, m.n)):
            raise ConfigError("sampling.lo/hi need 1 or n entries")
        return self


def _floats(raw: str) -> list[float] | None:
    raw = raw.strip()
    if not raw:
        return None
    return [float(v) for v in raw.split(",")]


def parse_config(text: str | None = None) -> ExperimentConfig:
    """Parse config text layered over DEFAULT_CONFIG; repeated sections merge, later keys win."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), strict=False)
    cp.read_string(DEFAULT_CONFIG)
    if text:
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    known = {"market", "sampling", "learning", "solver", "experiment"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    try:
        mk, sp, lr, sv, ex = (cp[s] for s in ("market", "sampling", "learning", "solver", "experiment"))
        cfg = ExperimentConfig(
            market=MarketConfig(
                n=mk.getint("n"),
                lam=_floats(mk["lambda"]),
                p_w=mk.getfloat("p_w"),
                p_r=mk.getfloat("p_r"),
                w=_floats(mk["w"]),
                b_noise_var=mk.getfloat("b_noise_var"),
                n_days=mk.getint("n_days"),
                seed=mk.getint("seed"),
            ),
            sampling=SamplingConfig(
                m=sp.getint("m"),
                lo=_floats(sp["lo"]),
                hi=_floats(sp["hi"]),
                noise=sp["noise"].strip(),
                seed=sp.getint("seed"),
            ),
            learning=LearningConfig(
                method=lr["method"].strip(),
                radius=lr.getfloat("radius"),
                delta=lr.getfloat("delta"),
                steps=lr.getint("steps"),
            ),
            solver=SolverSection(
                mode=sv["mode"].strip(),
                r=sv.getfloat("r"),
                alpha=(_floats(sv["alpha"]) or [None])[0],
                omega=_floats(sv["omega"]),
                iterations=sv.getint("iterations"),
                batch=sv.getint("batch"),
                draw_from=sv["draw_from"].strip(),
                log_stride=sv.getint("log_stride"),
            ),
            trials=ex.getint("trials"),
            seed=ex.getint("seed"),
            workers=ex.getint("workers"),
            output_dir=ex["output_dir"].strip(),
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


class PipelineError(RuntimeError):
    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
        self.phase = phase
        self.cause = cause


# --- building blocks ---------------------------------------------------------------


def build_market(cfg: ExperimentConfig) -> market.MarketParams:
    """Ground-truth market: standardized synthetic demand and a perturbed response matrix."""
    mc = cfg.market
    rng = np.random.default_rng(mc.seed)
    demand = market.standardize(market.synth_demand(mc.n, mc.n_days, rng))
    B = market.build_B(mc.n, math.sqrt(mc.b_noise_var), rng)
    return market.MarketParams(n=mc.n, lam=mc.lam, p_w=mc.p_w, p_r=mc.p_r, w=mc.w, B=B, base_demand=demand)


def sampling_box(cfg: ExperimentConfig, params: market.MarketParams) -> BoxSet:
    s = cfg.sampling
    if s.lo is None:
        return params.box
    n = params.n
    return BoxSet(np.broadcast_to(s.lo, (n,)), np.broadcast_to(s.hi, (n,)))


def run_sampling(cfg: ExperimentConfig, params: market.MarketParams) -> distmap.Dataset:
    true_map = distmap.LocationScaleMap(params.B, distmap.EmpiricalBase(params.base_demand))
    rng = np.random.default_rng(cfg.sampling.seed)
    dist = distmap.UniformBox(sampling_box(cfg, params))
    return distmap.collect_dataset(true_map, dist, cfg.sampling.m, rng, noiseless=cfg.sampling.noise == "none")


def run_learning(cfg: ExperimentConfig, data: distmap.Dataset) -> learn.HypothesisParams:
    lc = cfg.learning
    if lc.method == "pgd":
        return learn.fit_erm_projected(data, lc.radius, steps=lc.steps)
    return learn.fit_least_squares(data)


def learning_bounds(
    cfg: ExperimentConfig,
    params: market.MarketParams,
    data: distmap.Dataset,
    B_hat,
    agent: int = 0,
    eta: float = 0.0,
) -> learn.BoundReport:
    """Bound report for one provider's row of the response matrix.

    mu is the smallest eigenvalue of E[x x^T] under the sampling box, L_beta the
    largest ||x||^2, theta the calibrated sub-exponential modulus of the gradient.
    """
    box = sampling_box(cfg, params)
    dist = distmap.UniformBox(box)
    mu = float(np.linalg.eigvalsh(dist.second_moment())[0])
    L_beta = box.max_norm() ** 2
    r = cfg.learning.radius
    rng = np.random.default_rng(cfg.sampling.seed + 7919)
    row = data.agent(agent)
    theta = learn.calibrate_theta(row, np.asarray(B_hat)[agent : agent + 1], r, rng)
    eps = distmap.sensitivity_constant(params.box)
    L_z = market.cost_z_lipschitz(params)
    L_bar = _cost_lipschitz_in_x(params, B_hat)
    return learn.approx_and_excess_bounds(
        m=data.m,
        delta=cfg.learning.delta,
        ell=params.n,
        mu=mu,
        L_beta=L_beta,
        r=r,
        theta=theta,
        eta=eta,
        eps=eps,
        L_z=L_z,
        L_bar=L_bar,
        diam=params.box.diameter,
    )


def _cost_lipschitz_in_x(params: market.MarketParams, B) -> float:
    """Crude bound on the Lipschitz constant of F_i in x over the price box.

    dF_i/dx_j = E[grad_x f_i] 1{j=i} + b_ij E[grad_z f_i]; each term is bounded by
    its sup over the box and the base-demand table.
    """
    B = np.asarray(B, dtype=float)
    box = params.box
    xmax = float(np.max(np.abs(np.concatenate([box.lo, box.hi]))))
    zmax = float(np.max(np.abs(params.base_demand))) + np.max(np.abs(B).sum(axis=1)) * xmax
    gx = zmax + params.lam.max() * xmax
    gz = market.cost_z_lipschitz(params)
    return float(np.sqrt(gx**2 + (np.linalg.norm(B, axis=1).max() * gz) ** 2))


def certified_constants(params: market.MarketParams, B_model):
    mc = market.monotonicity_constants(params, B_model)
    return mc.alpha_conservative, mc.grad_lipschitz


def equilibrium(params: market.MarketParams, B_model, tol: float = 1e-12) -> np.ndarray:
    alpha, L = certified_constants(params, B_model)
    G = lambda x: market.expected_gradient(x, B_model, params)  # noqa: E731
    return solver.reference_nash(G, params.box, solver.certified_omega(alpha, L), tol=tol, x0=params.box.hi)


def summarize(trajectories) -> dict[str, np.ndarray]:
    """Per-step mean squared error with a 95% normal-approximation band.

    The lower edge is clipped at zero since errors are nonnegative.
    """
    trajectories = list(trajectories)
    if len(trajectories) < 2:
        raise ValueError("summary needs at least two trials")
    lengths = {len(tr.errors) for tr in trajectories}
    if len(lengths) != 1:
        raise ValueError("trials have different lengths")
    E = np.array([tr.errors for tr in trajectories])
    mean = E.mean(axis=0)
    stderr = E.std(axis=0, ddof=1) / math.sqrt(E.shape[0])
    return {
        "t": trajectories[0].t,
        "mean_error_sq": mean,
        "ci_low": np.maximum(mean - 1.96 * stderr, 0.0),
        "ci_high": mean + 1.96 * stderr,
    }


def write_summary_csv(path, summary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean_error_sq", "ci_low", "ci_high"])
        for row in zip(summary["t"], summary["mean_error_sq"], summary["ci_low"], summary["ci_high"]):
            w.writerow([int(row[0])] + [format(v, ".17g") for v in row[1:]])


def read_csv_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


@dataclass
class RunSummary:
    B_true: np.ndarray
    B_hat: np.ndarray
    erm_error: float
    bound_report: learn.BoundReport
    x_hat: np.ndarray
    x_star: np.ndarray
    alpha: float
    grad_lipschitz: float
    summary_path: str
    timings: dict[str, float]

    def to_text(self) -> str:
        def arr(a):
            return ",".join(format(v, ".17g") for v in np.ravel(a))

        lines = [
            f"n={self.B_true.shape[0]}",
            f"B_true={arr(self.B_true)}",
            f"B_hat={arr(self.B_hat)}",
            f"erm_error={self.erm_error:.17g}",
            f"x_hat={arr(self.x_hat)}",
            f"x_star={arr(self.x_star)}",
            f"alpha={self.alpha:.17g}",
            f"grad_lipschitz={self.grad_lipschitz:.17g}",
            f"summary_path={self.summary_path}",
        ]
        lines += [f"time_{k}={v:.6f}" for k, v in self.timings.items()]
        return "\n".join(lines) + "\n"


def solver_config(cfg: ExperimentConfig, params: market.MarketParams, alpha: float, L: float) -> solver.SolverConfig:
    sv = cfg.solver
    if sv.mode == "decaying":
        mode = solver.Decaying(sv.alpha if sv.alpha is not None else alpha, sv.r)
    else:
        om = sv.omega if sv.omega is not None else [solver.certified_omega(alpha, L)]
        mode = solver.ConstantStep(StepWeights(np.broadcast_to(om, (params.n,))))
    # trials start from the retail price, the upper corner of the box
    return solver.SolverConfig(
        mode=mode,
        iterations=sv.iterations,
        x0=params.box.hi.copy(),
        batch=sv.batch,
        log_stride=sv.log_stride,
    )


def pipeline(cfg: ExperimentConfig, out_dir=None) -> RunSummary:
    """Sampling, learning and optimization phases; writes every artifact under out_dir."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    start = time.perf_counter()

    def phase(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        finally:
            timings[name] = time.perf_counter() - t0

    params = phase("setup", lambda: build_market(cfg))
    data = phase("sampling", lambda: run_sampling(cfg, params))
    data.to_csv(out / "dataset.csv")
    market.write_demand_csv(out / "demand.csv", params.base_demand)

    hyp = phase("learning", lambda: run_learning(cfg, data))
    B_hat = hyp.B_hat
    report = phase("bounds", lambda: learning_bounds(cfg, params, data, B_hat))
    (out / "bounds.txt").write_text(report.to_text())

    def optimize():
        alpha, L = certified_constants(params, B_hat)
        x_hat = equilibrium(params, B_hat)
        x_star = equilibrium(params, params.B)
        feed = solver.MarketFeed(params, B_hat, stochastic=True, B_draw=params.B if cfg.solver.draw_from == "truth" else None)
        scfg = solver_config(cfg, params, alpha, L)
        workers = cfg.workers or os.cpu_count() or 1
        trajs = solver.run_trials(scfg, feed, params.box, cfg.trials, cfg.seed, x_ref=x_hat, workers=workers)
        return alpha, L, x_hat, x_star, trajs

    alpha, L, x_hat, x_star, trajs = phase("optimization", optimize)
    solver.write_trajectories_csv(out / "trajectory.csv", trajs)
    if len(trajs) >= 2:
        write_summary_csv(out / "summary.csv", summarize(trajs))

    timings["total"] = time.perf_counter() - start
    run = RunSummary(
        B_true=params.B,
        B_hat=B_hat,
        erm_error=float(np.linalg.norm(B_hat - params.B)),
        bound_report=report,
        x_hat=x_hat,
        x_star=x_star,
        alpha=alpha,
        grad_lipschitz=L,
        summary_path=str(out / "summary.csv"),
        timings=timings,
    )
    (out / "run_summary.txt").write_text(run.to_text())
    return run


# --- oracle suite -------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def verify_suite(params: market.MarketParams, rng: np.random.Generator, points: int = 200) -> list[CheckResult]:
    """Compare the market and solver against the independent oracle implementations."""
    from . import oracle

    box = params.box
    B = params.B
    results = []

    # analytic gradients against central differences of an independent cost
    worst = 0.0
    for _ in range(points):
        x = box.lo + (box.hi - box.lo) * rng.random(params.n)
        xi = params.base_demand[rng.integers(params.base_demand.shape[0])]
        g = market.gradient_samples(x, xi[None, :], B, params)[0]
        for i in range(params.n):
            def f(v, i=i):
                y = x.copy()
                y[i] = v[0]
                z = xi[i] + B[i] @ y
                return oracle.ev_cost(v[0], z, params.lam[i], params.p_w, params.p_r, params.w[i])

            fd = oracle.finite_diff(f, np.array([x[i]]))[0]
            worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    results.append(CheckResult("gradient_vs_finite_difference", worst <= 1e-6, f"max rel err {worst:.2e}"))

    # expected cost agrees with the oracle's vectorized formula
    x = box.center
    gap = float(np.max(np.abs(market.expected_cost(x, B, params) - oracle.ev_expected_costs(
        x, B, params.base_demand, params.lam, params.p_w, params.p_r, params.w))))
    results.append(CheckResult("expected_cost_vs_oracle", gap <= 1e-12, f"max gap {gap:.2e}"))

    # certified constants: Lipschitz bound and monotonicity on random pairs
    mc = market.monotonicity_constants(params, B)
    alpha, L = mc.alpha_conservative, mc.grad_lipschitz
    G = lambda v: market.expected_gradient(v, B, params)  # noqa: E731
    pairs = [(box.lo + (box.hi - box.lo) * rng.random(params.n), box.lo + (box.hi - box.lo) * rng.random(params.n)) for _ in range(points)]
    lip = oracle.brute_force_lipschitz(G, pairs)
    results.append(CheckResult("lipschitz_bound", lip <= L + 1e-9, f"brute force {lip:.4f} <= certified {L:.4f}"))
    mono = min(float((a - b) @ (G(a) - G(b)) - alpha * (a - b) @ (a - b)) for a, b in pairs)
    results.append(CheckResult("strong_monotonicity", mono >= -1e-9, f"min slack {mono:.3e} at alpha {alpha:.4f}"))

    # reduced quadratic game: closed form against gradient play
    q = params.replace(p_w=0.0, p_r=0.0, price_bounds=(-10.0, 10.0))
    spec = oracle.QuadraticGameSpec(q.n, q.lam, q.B, q.base_demand.mean(axis=0), q.box.lo, q.box.hi)
    x_cf = oracle.closed_form_nash(spec)
    mq = market.monotonicity_constants(q, q.B)
    x_rn = solver.reference_nash(spec.gradient, q.box, solver.certified_omega(mq.alpha_conservative, mq.grad_lipschitz), tol=1e-12)
    gap = float(np.max(np.abs(x_cf - x_rn)))
    results.append(CheckResult("closed_form_vs_reference_nash", gap <= 1e-8, f"max gap {gap:.2e}"))
    return results
