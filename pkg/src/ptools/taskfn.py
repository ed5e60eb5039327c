"""Learned task functions: exact GPR with a squared-exponential ARD kernel.

Hyperparameters (per-dimension length-scales, signal variance, noise
variance) maximize the log marginal likelihood with analytic gradients
and 5 seeded random restarts. The ARD length-scales drive an
importance statistic (raw feature range / raw-unit length-scale) used
to prune irrelevant feature dimensions, plus the interpolation
upsampling and category balancing of the training pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .ptool import PTool, PToolFeatures
from .tasks import TaskSpec, categorize

MODEL_SCHEMA_VERSION = 1

N_RESTARTS = 5
JITTER = 1e-10


@dataclass
class LabeledSet:
    """Features with their raw oracle scores and 1-4 categories."""

    features: list[PToolFeatures]
    raw_scores: np.ndarray
    categories: np.ndarray

    def __post_init__(self):
        self.raw_scores = np.asarray(self.raw_scores, dtype=float)
        self.categories = np.asarray(self.categories, dtype=int)
        if not (len(self.features) == len(self.raw_scores) == len(self.categories)):
            raise ValueError("features, raw_scores and categories must align")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([f.vector for f in self.features])

    def __len__(self) -> int:
        return len(self.features)


@dataclass
class TaskFunctionModel:
    """Trained GPR restricted to its active feature dimensions."""

    active_dims: list[int]
    log_ell: np.ndarray          # length-scales on the standardized scale
    log_sf2: float
    log_sn2: float
    x_mean: np.ndarray           # raw-unit standardization constants
    x_std: np.ndarray
    y_mean: float
    X: np.ndarray                # standardized training inputs (n x d)
    y: np.ndarray                # centered training targets
    task_name: str | None = None
    _L: np.ndarray | None = field(default=None, repr=False)
    _alpha: np.ndarray | None = field(default=None, repr=False)

    @property
    def length_scales(self) -> np.ndarray:
        """Per-active-dimension length-scales in raw data units."""
        return np.exp(self.log_ell) * self.x_std

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.log_sf2))

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.log_sn2))

    def _factorize(self):
        if self._L is None:
            K = _kernel(self.X, self.X, np.exp(self.log_ell), self.signal_variance)
            K[np.diag_indices_from(K)] += self.noise_variance + JITTER
            self._L = cholesky(K, lower=True)
            self._alpha = cho_solve((self._L, True), self.y)
        return self._L, self._alpha

    @property
    def solve_factor(self) -> np.ndarray:
        """Lower-triangular Cholesky factor of (K + sigma^2 I)."""
        return self._factorize()[0]

    def to_dict(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "task_name": self.task_name,
            "active_dims": list(map(int, self.active_dims)),
            "log_ell": self.log_ell.tolist(),
            "log_sf2": self.log_sf2,
            "log_sn2": self.log_sn2,
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "X": self.X.tolist(),
            "y": self.y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskFunctionModel":
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ValueError("unsupported model schema version")
        return cls(active_dims=list(d["active_dims"]),
                   log_ell=np.array(d["log_ell"], dtype=float),
                   log_sf2=float(d["log_sf2"]), log_sn2=float(d["log_sn2"]),
                   x_mean=np.array(d["x_mean"], dtype=float),
                   x_std=np.array(d["x_std"], dtype=float),
                   y_mean=float(d["y_mean"]),
                   X=np.array(d["X"], dtype=float),
                   y=np.array(d["y"], dtype=float),
                   task_name=d.get("task_name"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "TaskFunctionModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _kernel(xa: np.ndarray, xb: np.ndarray, ell: np.ndarray,
            sf2: float) -> np.ndarray:
    d = (xa[:, None, :] - xb[None, :, :]) / ell
    return sf2 * np.exp(-0.5 * np.sum(d * d, axis=2))


def _lml_with_cached_dists(theta: np.ndarray, D: np.ndarray,
                           y: np.ndarray) -> tuple[float, np.ndarray]:
    """LML and gradient given precomputed squared differences D (n,n,d)."""
    n, d = len(y), D.shape[2]
    log_ell, log_sf2, log_sn2 = theta[:d], theta[d], theta[d + 1]
    inv_ell2 = np.exp(-2.0 * log_ell)
    sf2 = np.exp(log_sf2)
    sn2 = np.exp(log_sn2)

    Kf = sf2 * np.exp(-0.5 * (D @ inv_ell2))
    K = Kf + (sn2 + JITTER) * np.eye(n)
    L = cholesky(K, lower=True)
    alpha = cho_solve((L, True), y)

    lml = (-0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(L))))
           - 0.5 * n * np.log(2.0 * np.pi))

    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    M = W * Kf
    grad = np.empty(d + 2)
    grad[:d] = 0.5 * np.einsum("ij,ijk->k", M, D) * inv_ell2
    grad[d] = 0.5 * float(np.sum(M))
    grad[d + 1] = 0.5 * float(np.trace(W)) * sn2
    return lml, grad


def log_marginal_likelihood(theta: np.ndarray, X: np.ndarray,
                            y: np.ndarray) -> tuple[float, np.ndarray]:
    """LML and its gradient w.r.t. [log_ell_1..d, log_sf2, log_sn2]."""
    diff = X[:, None, :] - X[None, :, :]
    return _lml_with_cached_dists(theta, diff * diff, y)


_THETA_BOUNDS = {
    "log_ell": (np.log(1e-2), np.log(1e4)),
    "log_sf2": (np.log(1e-8), np.log(1e6)),
    "log_sn2": (np.log(1e-10), np.log(1e4)),
}


def train(data: LabeledSet, rng_seed: int,
          active_dims: list[int] | None = None,
          task_name: str | None = None) -> TaskFunctionModel:
    """Fit GPR hyperparameters by maximizing the marginal likelihood.

    Features are standardized per dimension (constants recorded on the
    model); targets are centered. L-BFGS-B ascends the likelihood with
    analytic gradients from one deterministic start plus 4 random
    restarts.
    """
    if len(data) < 10:
        raise ValueError("need at least 10 training points")
    X_raw = data.matrix
    if active_dims is None:
        active_dims = list(range(X_raw.shape[1]))
    X_raw = X_raw[:, active_dims]
    y_raw = data.raw_scores
    if np.ptp(y_raw) == 0.0:
        raise ValueError("targets are constant; nothing to regress")

    x_mean = X_raw.mean(axis=0)
    x_std = X_raw.std(axis=0)
    x_std[x_std == 0.0] = 1.0
    X = (X_raw - x_mean) / x_std
    y_mean = float(y_raw.mean())
    y = y_raw - y_mean
    n, d = X.shape

    y_var = float(y.var())
    rng = np.random.default_rng(rng_seed)
    starts = [np.concatenate([np.zeros(d),
                              [np.log(max(y_var, 1e-8)), np.log(max(y_var, 1e-8) * 1e-2)]])]
    for _ in range(N_RESTARTS - 1):
        starts.append(np.concatenate([
            rng.uniform(np.log(0.3), np.log(10.0), size=d),
            [np.log(max(y_var, 1e-8)) + rng.uniform(-1.0, 1.0),
             np.log(max(y_var, 1e-8)) + rng.uniform(-7.0, -1.0)]]))

    bounds = ([_THETA_BOUNDS["log_ell"]] * d
              + [_THETA_BOUNDS["log_sf2"], _THETA_BOUNDS["log_sn2"]])

    diff = X[:, None, :] - X[None, :, :]
    D = diff * diff  # cached across optimizer iterations

    def objective(theta):
        try:
            lml, grad = _lml_with_cached_dists(theta, D, y)
        except np.linalg.LinAlgError:
            return 1e12, np.zeros_like(theta)
        return -lml, -grad

    best_theta, best_val = None, np.inf
    for x0 in starts:
        res = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds)
        if res.fun < best_val:
            best_val, best_theta = res.fun, res.x

    model = TaskFunctionModel(
        active_dims=list(active_dims),
        log_ell=best_theta[:d].copy(),
        log_sf2=float(best_theta[d]), log_sn2=float(best_theta[d + 1]),
        x_mean=x_mean, x_std=x_std, y_mean=y_mean, X=X, y=y,
        task_name=task_name)
    model._factorize()
    return model


def _standardize_query(model: TaskFunctionModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    x = x[:, model.active_dims] if x.shape[1] != len(model.active_dims) else x
    return (x - model.x_mean) / model.x_std


def predict_batch(model: TaskFunctionModel, X_raw: np.ndarray):
    """Posterior means and variances for raw feature rows (n x 31)."""
    L, alpha = model._factorize()
    Xq = _standardize_query(model, X_raw)
    ks = _kernel(model.X, Xq, np.exp(model.log_ell), model.signal_variance)
    mean = model.y_mean + ks.T @ alpha
    v = solve_triangular(L, ks, lower=True)
    var = np.maximum(model.signal_variance - np.sum(v * v, axis=0), 0.0)
    return mean, var


def predict(model: TaskFunctionModel, x: PToolFeatures | np.ndarray):
    """Posterior (mean, variance) at one query point."""
    vec = x.vector if isinstance(x, PToolFeatures) else np.asarray(x, dtype=float)
    mean, var = predict_batch(model, vec[None, :])
    return float(mean[0]), float(var[0])


def importance(model: TaskFunctionModel, data: LabeledSet) -> np.ndarray:
    """Per-active-dimension importance: raw value range / length-scale."""
    X_raw = data.matrix[:, model.active_dims]
    ranges = np.ptp(X_raw, axis=0)
    return ranges / model.length_scales


def train_with_pruning(data: LabeledSet, rng_seed: int,
                       task_name: str | None = None,
                       importance_threshold: float = 1.0) -> TaskFunctionModel:
    """Iterate train / importance / drop-low-importance dimensions.

    Stops when every remaining dimension has importance >= the
    threshold or a single dimension remains. Each iteration's active
    set contains the next (a subset chain).
    """
    active = list(range(data.matrix.shape[1]))
    while True:
        model = train(data, rng_seed, active_dims=active, task_name=task_name)
        imp = importance(model, data)
        if len(active) == 1 or np.all(imp >= importance_threshold):
            return model
        keep = [dim for dim, v in zip(active, imp) if v >= importance_threshold]
        if not keep:
            keep = [active[int(np.argmax(imp))]]
        if keep == active:
            return model
        active = keep


# ---------------------------------------------------------------------------
# Training-set upsampling and balancing
# ---------------------------------------------------------------------------

def interpolation_sample(ptools: list[PTool], rng_seed: int,
                         n_per_pair: int = 100,
                         spacing: str = "random") -> list[PTool]:
    """Convex combinations between nearby p-tool pairs.

    A pair qualifies iff its Euclidean distance (in the 25-dim p-tool
    space) is strictly below the mean closest-neighbour distance.
    Discrete type flags are copied from the nearer endpoint; outputs
    outside the valid p-tool ranges are dropped.
    """
    if len(ptools) < 2:
        raise ValueError("need at least 2 p-tools to interpolate")
    if spacing not in ("random", "even"):
        raise ValueError("spacing must be 'random' or 'even'")
    V = np.array([pt.vector for pt in ptools])
    diff = V[:, None, :] - V[None, :, :]
    D = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(D, np.inf)
    mu = float(np.mean(D.min(axis=1)))

    rng = np.random.default_rng(rng_seed)
    out: list[PTool] = []
    n = len(ptools)
    for i in range(n):
        for j in range(i + 1, n):
            if not D[i, j] < mu:
                continue
            if spacing == "random":
                ts = rng.uniform(0.0, 1.0, size=n_per_pair)
            else:
                ts = np.linspace(0.0, 1.0, n_per_pair + 2)[1:-1]
            for t in ts:
                v = (1.0 - t) * V[i] + t * V[j]
                src = i if t < 0.5 else j
                v[8] = V[src][8]
                v[17] = V[src][17]
                try:
                    out.append(PTool.from_vector(
                        v, provenance={"interpolated_from": [i, j],
                                       "t": float(t)}))
                except ValueError:
                    continue
    return out


def balance(ptools: list[PTool], model: TaskFunctionModel, task: TaskSpec,
            target_n: int, rng_seed: int,
            features_fn=None) -> list[PTool]:
    """Discard from over-represented predicted categories until uniform.

    Candidates are scored by the model, categorized with the task
    thresholds, and randomly thinned so the output has target_n
    p-tools with no category holding more than 5% above another.
    """
    from .ptool import features as _features

    features_fn = features_fn or _features
    if target_n < 4:
        raise ValueError("target_n must be at least 4")
    X = np.array([features_fn(pt).vector for pt in ptools])
    means, _ = predict_batch(model, X)
    cats = np.array([categorize(m, task.thresholds) for m in means])

    base, extra = divmod(target_n, 4)
    want = {c: base + (1 if c <= extra else 0) for c in (1, 2, 3, 4)}
    counts = {c: int(np.sum(cats == c)) for c in (1, 2, 3, 4)}
    deficits = {c: want[c] - counts[c] for c in (1, 2, 3, 4) if counts[c] < want[c]}
    if deficits:
        raise ValueError(f"categories under-represented, missing {deficits}")
    hi, lo = max(want.values()), min(want.values())
    if hi > 1.05 * lo:
        raise ValueError(
            f"target_n={target_n} cannot satisfy the 5% uniformity bound")

    rng = np.random.default_rng(rng_seed)
    chosen: list[int] = []
    for c in (1, 2, 3, 4):
        idx = np.flatnonzero(cats == c)
        pick = rng.choice(idx, size=want[c], replace=False)
        chosen.extend(int(i) for i in pick)
    return [ptools[i] for i in sorted(chosen)]
