"""Loss-to-capability and compute-to-loss laws.

The capability law is a bounded decreasing sigmoid of validation loss with
the floor fixed at the domain's chance level and the ceiling at 1; only
steepness (alpha) and midpoint (beta) are fitted, by minimizing mean
squared error against observed capability proxies with bounded L-BFGS-B
from a fixed multi-start schedule. The compute law is ordinary least
squares of loss against ln(compute).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from capval.errors import ConsistencyError, FitError, InsufficientDataError, RangeError
from capval.kernels import EXP_CLAMP, sigmoid_eval, sigmoid_mse_grad, sigmoid_mse_grid

ALPHA_BOUNDS = (1e-3, 100.0)
MULTISTART_BETA_QUANTILES = (0.2, 0.4, 0.6, 0.8)
MULTISTART_ALPHAS = (1.0, 10.0)
# the objective is nonconvex (step-like basins in beta at large alpha); a
# coarse exhaustive scan seeds one extra start at the best grid cell
GRID_PRESCAN = 400


@dataclass(frozen=True)
class SigmoidFit:
    """Fitted capability law for one domain plus fit diagnostics."""

    domain_id: str
    alpha: float
    beta: float
    gamma: float
    mse: float
    p95: float
    residuals: tuple[tuple[str, float], ...]
    n_points: int
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "domain_id": self.domain_id,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "mse": self.mse,
            "p95": self.p95,
            "n_points": self.n_points,
            "degenerate": self.degenerate,
            "residuals": [[m, r] for m, r in self.residuals],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SigmoidFit":
        return cls(
            domain_id=obj["domain_id"], alpha=obj["alpha"], beta=obj["beta"],
            gamma=obj["gamma"], mse=obj["mse"], p95=obj["p95"],
            residuals=tuple((m, r) for m, r in obj.get("residuals", [])),
            n_points=obj["n_points"], degenerate=obj.get("degenerate", False),
        )


@dataclass(frozen=True)
class LogLinearFit:
    """OLS fit of loss against ln(compute) for one domain or model series."""

    domain_id: str
    intercept: float
    slope: float
    r_squared: float
    n_points: int
    series_id: str = ""

    def predict(self, compute: float) -> float:
        return self.intercept + self.slope * math.log(compute)

    def to_json(self) -> dict:
        return {
            "domain_id": self.domain_id,
            "series_id": self.series_id,
            "intercept": self.intercept,
            "slope": self.slope,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
        }


@dataclass(frozen=True)
class StageTrend:
    """Per-stage OLS of loss against ln(tokens_seen)."""

    stage: str
    intercept: float
    slope: float
    r_squared: float
    n_points: int
    resid_std: float

    def predict(self, tokens: float) -> float:
        return self.intercept + self.slope * math.log(tokens)


@dataclass(frozen=True)
class StageGapReport:
    """Loss discontinuity between two training stages at their transition."""

    model_id: str
    domain_id: str
    transition_tokens: float
    gap: float
    gap_stderr: float
    stage_fits: tuple[StageTrend, StageTrend]

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "domain_id": self.domain_id,
            "transition_tokens": self.transition_tokens,
            "gap": self.gap,
            "gap_stderr": self.gap_stderr,
            "stages": [
                {"stage": t.stage, "intercept": t.intercept, "slope": t.slope,
                 "r_squared": t.r_squared, "n_points": t.n_points,
                 "resid_std": t.resid_std}
                for t in self.stage_fits
            ],
        }


def compute_flops(n_params: float, tokens: float) -> float:
    """Training-compute coordinate C = 6*N*D from parameter and token counts."""
    if n_params <= 0 or tokens <= 0:
        raise RangeError("n_params and tokens must be positive")
    return 6.0 * n_params * tokens


def sigmoid_capability(loss: float, alpha: float, beta: float, gamma: float) -> float:
    """gamma + (1-gamma)/(1+exp(alpha*(loss-beta))), guarded against overflow."""
    if not math.isfinite(loss):
        raise RangeError(f"loss must be finite, got {loss}")
    if not 0.0 <= gamma < 1.0:
        raise RangeError(f"gamma must be in [0, 1), got {gamma}")
    z = alpha * (loss - beta)
    z = max(-EXP_CLAMP, min(EXP_CLAMP, z))
    return gamma + (1.0 - gamma) / (1.0 + math.exp(z))


def predict_capability(loss: float, fit: SigmoidFit) -> float:
    return sigmoid_capability(loss, fit.alpha, fit.beta, fit.gamma)


def capability_mse_objective(params, losses, caps, gamma):
    """Eq-style MSE objective and its analytic gradient, for the optimizer."""
    alpha, beta = params
    mse, da, db = sigmoid_mse_grad(losses, caps, alpha, beta, gamma)
    return mse, np.array([da, db])


def fit_metrics(residuals, kind: str = "std") -> dict:
    """MSE and the P95 confidence-interval width of a residual list.

    p95 is 1.96 x the population standard deviation of the residuals;
    kind="mean_abs" gives the 1.96 x mean-absolute-residual alternative.
    A single residual is a degenerate case (population sigma of one point
    is 0) and is flagged in the output.
    """
    r = np.asarray(list(residuals), dtype=np.float64)
    if r.size == 0:
        raise InsufficientDataError("fit_metrics requires at least one residual")
    mse = float(np.mean(r * r))
    if kind == "std":
        p95 = 1.96 * float(np.std(r))
    elif kind == "mean_abs":
        p95 = 1.96 * float(np.mean(np.abs(r)))
    else:
        raise ValueError(f"unknown p95 kind {kind!r}")
    return {"mse": mse, "p95": p95, "degenerate": r.size == 1}


def fit_sigmoid(observations, gamma: float, domain_id: str = "",
                p95_kind: str = "std") -> SigmoidFit:
    """Fit (alpha, beta) of the capability sigmoid by bounded minimization.

    Runs L-BFGS-B with the analytic gradient from 8 fixed starts (beta at
    the 0.2/0.4/0.6/0.8 loss quantiles x alpha in {1, 10}) plus one start
    at the best cell of an exhaustive 400x400 parameter scan; the best
    final MSE wins. Requires at least 3 observations carrying both a
    finite loss and a capability value.
    """
    obs = [o for o in observations
           if o.capability is not None and math.isfinite(o.loss) and math.isfinite(o.capability)]
    if len(obs) < 3:
        raise InsufficientDataError(
            f"sigmoid fit needs >= 3 observations with capability, got {len(obs)}")
    if not 0.0 <= gamma < 1.0:
        raise RangeError(f"gamma must be in [0, 1), got {gamma}")
    losses = np.array([o.loss for o in obs], dtype=np.float64)
    caps = np.array([o.capability for o in obs], dtype=np.float64)

    beta_hi = 2.0 * float(losses.max())
    bounds = [ALPHA_BOUNDS, (0.0, beta_hi)]
    beta_starts = [float(np.quantile(losses, q)) for q in MULTISTART_BETA_QUANTILES]
    starts = [(a0, b0) for b0 in beta_starts for a0 in MULTISTART_ALPHAS]

    alpha_scan = np.linspace(ALPHA_BOUNDS[0], ALPHA_BOUNDS[1], GRID_PRESCAN)
    beta_scan = np.linspace(0.0, beta_hi, GRID_PRESCAN)
    scan = np.asarray(sigmoid_mse_grid(losses, caps, alpha_scan, beta_scan, gamma))
    i, j = np.unravel_index(int(np.argmin(scan)), scan.shape)
    starts.append((float(alpha_scan[i]), float(beta_scan[j])))

    best = None
    failures = []
    for alpha0, beta0 in starts:
        result = minimize(
            capability_mse_objective,
            x0=np.array([alpha0, beta0]),
            args=(losses, caps, gamma),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            # tight tolerances: noiseless recovery must reach mse ~ 1e-16
            options={"maxiter": 1000, "ftol": 1e-15, "gtol": 1e-12},
        )
        if not math.isfinite(result.fun):
            failures.append(f"start (a={alpha0}, b={beta0:.4g}): {result.message}")
            continue
        if best is None or result.fun < best.fun:
            best = result
    if best is None:
        raise FitError("all optimizer starts diverged: " + "; ".join(failures))

    alpha, beta = float(best.x[0]), float(best.x[1])
    predicted = sigmoid_eval(losses, alpha, beta, gamma)
    residual_values = caps - np.asarray(predicted)
    metrics = fit_metrics(residual_values, kind=p95_kind)
    return SigmoidFit(
        domain_id=domain_id or (obs[0].domain_id if obs else ""),
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        mse=metrics["mse"],
        p95=metrics["p95"],
        residuals=tuple((o.model_id, float(r)) for o, r in zip(obs, residual_values)),
        n_points=len(obs),
        degenerate=metrics["degenerate"],
    )


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Least squares y = a + b*x; returns (intercept, slope, r_squared, ss_res)."""
    n = x.size
    xbar = float(x.mean())
    ybar = float(y.mean())
    sxx = float(np.sum((x - xbar) ** 2))
    if sxx == 0.0:
        raise FitError("zero variance in the regressor; cannot fit a line")
    sxy = float(np.sum((x - xbar) * (y - ybar)))
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ybar) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return intercept, slope, r_squared, ss_res


def fit_loglinear(points, domain_id: str = "", series_id: str = "") -> LogLinearFit:
    """OLS of loss against ln(compute) over (compute, loss) pairs."""
    pts = [(float(c), float(loss)) for c, loss in points]
    if len(pts) < 2:
        raise InsufficientDataError(f"log-linear fit needs >= 2 points, got {len(pts)}")
    for c, _ in pts:
        if not (math.isfinite(c) and c > 0):
            raise RangeError(f"compute must be positive and finite, got {c}")
    x = np.log(np.array([c for c, _ in pts], dtype=np.float64))
    y = np.array([loss for _, loss in pts], dtype=np.float64)
    intercept, slope, r_squared, _ = _ols(x, y)
    return LogLinearFit(
        domain_id=domain_id, series_id=series_id,
        intercept=intercept, slope=slope, r_squared=r_squared, n_points=len(pts),
    )


def _stage_trend(points) -> StageTrend:
    x = np.log(np.array([p.tokens_seen for p in points], dtype=np.float64))
    y = np.array([p.loss for p in points], dtype=np.float64)
    intercept, slope, r_squared, ss_res = _ols(x, y)
    n = x.size
    resid_std = math.sqrt(ss_res / (n - 2)) if n > 2 else 0.0
    return StageTrend(
        stage=points[0].stage, intercept=intercept, slope=slope,
        r_squared=r_squared, n_points=n, resid_std=resid_std,
    )


def _prediction_stderr(points, trend: StageTrend, x_star: float) -> float:
    x = np.log(np.array([p.tokens_seen for p in points], dtype=np.float64))
    n = x.size
    if n <= 2:
        return 0.0
    sxx = float(np.sum((x - x.mean()) ** 2))
    return trend.resid_std * math.sqrt(1.0 / n + (x_star - float(x.mean())) ** 2 / sxx)


def stage_gap(points) -> StageGapReport:
    """Loss gap between two training stages at their transition point.

    Fits loss vs ln(tokens_seen) per stage and evaluates both trends at
    the geometric midpoint between the first stage's last token count and
    the second stage's first; gap = first-stage trend minus second-stage
    trend there. Requires exactly two stages with >= 3 points each and
    disjoint token ranges.
    """
    points = list(points)
    stages: dict[str, list] = {}
    for p in points:
        stages.setdefault(p.stage, []).append(p)
    if len(stages) != 2:
        raise ConsistencyError(f"stage gap needs exactly two stages, got {sorted(stages)}")
    groups = sorted(stages.values(), key=lambda g: min(p.tokens_seen for p in g))
    first, second = groups
    for g in (first, second):
        if len(g) < 3:
            raise InsufficientDataError(
                f"stage {g[0].stage!r} has {len(g)} points; need >= 3")
        g.sort(key=lambda p: p.tokens_seen)
    if first[-1].tokens_seen >= second[0].tokens_seen:
        raise ConsistencyError(
            "stage token ranges overlap; transition point is not defined")

    transition = math.sqrt(float(first[-1].tokens_seen) * float(second[0].tokens_seen))
    trend1 = _stage_trend(first)
    trend2 = _stage_trend(second)
    gap = trend1.predict(transition) - trend2.predict(transition)
    x_star = math.log(transition)
    stderr = math.hypot(
        _prediction_stderr(first, trend1, x_star),
        _prediction_stderr(second, trend2, x_star),
    )
    models = {p.model_id for p in points}
    domains = {p.domain_id for p in points}
    if len(models) > 1 or len(domains) > 1:
        raise ConsistencyError(
            f"stage gap expects a single (model, domain) series, got {models} x {domains}")
    return StageGapReport(
        model_id=next(iter(models)),
        domain_id=next(iter(domains)),
        transition_tokens=transition,
        gap=gap,
        gap_stderr=stderr,
        stage_fits=(trend1, trend2),
    )
