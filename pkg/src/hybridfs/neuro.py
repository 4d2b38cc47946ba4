"""Two-layer perceptron trained by Levenberg-Marquardt, and the penalized
held-out-error cost used to score feature subsets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .dataset import Dataset, SplitSpec, project, stratified_split

__all__ = [
    "MlpModel",
    "LmConfig",
    "CostConfig",
    "CostValue",
    "TrainingDivergedError",
    "init_mlp",
    "init_mlp_for_mask",
    "forward",
    "predict",
    "mse",
    "jacobian",
    "train_lm",
    "penalized_cost",
    "evaluate_cost",
    "CostFunction",
]


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MlpModel:
    """tanh hidden layer, linear output. Biases sit in the last column."""

    weights_hidden: np.ndarray  # (hidden_dim, input_dim + 1)
    weights_output: np.ndarray  # (1, hidden_dim + 1)

    def __post_init__(self):
        Wh = np.array(self.weights_hidden, dtype=float)
        wo = np.array(self.weights_output, dtype=float).reshape(1, -1)
        if Wh.ndim != 2 or wo.shape[1] != Wh.shape[0] + 1:
            raise ValueError(f"inconsistent weight shapes {Wh.shape} and {wo.shape}")
        if not (np.isfinite(Wh).all() and np.isfinite(wo).all()):
            raise ValueError("weights must be finite")
        Wh.flags.writeable = False
        wo.flags.writeable = False
        object.__setattr__(self, "weights_hidden", Wh)
        object.__setattr__(self, "weights_output", wo)

    @property
    def input_dim(self) -> int:
        return self.weights_hidden.shape[1] - 1

    @property
    def hidden_dim(self) -> int:
        return self.weights_hidden.shape[0]

    @property
    def n_weights(self) -> int:
        return self.weights_hidden.size + self.weights_output.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights_hidden.ravel(), self.weights_output.ravel()])

    def with_flat(self, w: np.ndarray) -> "MlpModel":
        k = self.weights_hidden.size
        return MlpModel(w[:k].reshape(self.weights_hidden.shape), w[k:].reshape(1, -1))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "weights_hidden": self.weights_hidden.tolist(),
            "weights_output": self.weights_output.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        model = cls(np.array(d["weights_hidden"]), np.array(d["weights_output"]))
        if (model.input_dim, model.hidden_dim) != (d["input_dim"], d["hidden_dim"]):
            raise ValueError("declared dimensions do not match weights")
        return model


@dataclass(frozen=True)
class LmConfig:
    initial_damping: float = 1e-2
    damping_up: float = 10.0
    damping_down: float = 10.0
    max_epochs: int = 100
    convergence_tol: float = 1e-6
    max_damping: float = 1e10
    early_stopping_fraction: float = 0.15
    max_fail: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.initial_damping <= 0 or self.convergence_tol <= 0:
            raise ValueError("damping and tolerance must be positive")
        if self.damping_up <= 1 or self.damping_down <= 1:
            raise ValueError("damping factors must exceed 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not 0.0 <= self.early_stopping_fraction < 1.0:
            raise ValueError("early_stopping_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class CostConfig:
    """Parameters of the feature-subset cost ``J = eps * (1 + omega * k)``.

    ``eps`` is the MSE of an MLP on an inner held-out split of the data it
    is given; ``k`` is the number of selected features.
    """

    omega: float = 0.01
    hidden_dim: int = 15
    lm: LmConfig = field(default_factory=LmConfig)
    inner_train_fraction: float = 0.7
    inner_split_seed: int = 0
    worst_cost: float = 1e6
    clip_predictions: bool = False
    init: str = "per_call"

    def __post_init__(self):
        if self.init not in ("per_feature", "per_call"):
            raise ValueError("init must be 'per_feature' or 'per_call'")
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if isinstance(self.lm, dict):
            object.__setattr__(self, "lm", LmConfig(**self.lm))


@dataclass(frozen=True)
class CostValue:
    epsilon: float
    j: float
    n_selected: int


def init_mlp(input_dim: int, hidden_dim: int = 15, seed: int = 0) -> MlpModel:
    """Uniform weights in +-1/sqrt(fan_in) per layer."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    a = 1.0 / math.sqrt(input_dim)
    b = 1.0 / math.sqrt(hidden_dim)
    Wh = rng.uniform(-a, a, size=(hidden_dim, input_dim + 1))
    wo = rng.uniform(-b, b, size=(1, hidden_dim + 1))
    return MlpModel(Wh, wo)


def init_mlp_for_mask(mask, hidden_dim: int = 15, seed: int = 0) -> MlpModel:
    """Initial weights where each feature's column depends only on the
    feature index and ``seed``, not on which other features are selected.

    Masks that differ in a few genes then start from nearly the same
    network, which keeps the cost of neighbouring masks comparable.
    """
    mask = np.asarray(mask).astype(bool)
    k = int(mask.sum())
    if k < 1 or hidden_dim < 1:
        raise ValueError("need a non-empty mask and hidden_dim >= 1")
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1.0, 1.0, size=(hidden_dim, mask.size + 1))
    wo = rng.uniform(-1.0, 1.0, size=(1, hidden_dim + 1))
    cols = np.append(np.flatnonzero(mask), mask.size)
    return MlpModel(W[:, cols] / math.sqrt(k), wo / math.sqrt(hidden_dim))


def _hidden(model: MlpModel, X: np.ndarray):
    Xt = np.hstack([X, np.ones((X.shape[0], 1))])
    H = np.tanh(Xt @ model.weights_hidden.T)
    return Xt, H


def predict(model: MlpModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} inputs, got {X.shape[1]}")
    _, H = _hidden(model, X)
    wo = model.weights_output[0]
    return H @ wo[:-1] + wo[-1]


def forward(model: MlpModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.input_dim,):
        raise ValueError(f"expected a vector of length {model.input_dim}, got shape {x.shape}")
    return float(predict(model, x[None, :])[0])


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError("predictions and targets differ in length")
    if p.size == 0:
        raise ValueError("mse of an empty batch")
    r = p - t
    return float(np.mean(r * r))


def jacobian(model: MlpModel, X) -> np.ndarray:
    """d(prediction_i)/d(weight) for every row, weights in ``model.flat()`` order."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} inputs, got {X.shape[1]}")
    Xt, H = _hidden(model, X)
    wo = model.weights_output[0, :-1]
    delta = (1.0 - H * H) * wo  # (n, h)
    n = X.shape[0]
    J_hidden = (delta[:, :, None] * Xt[:, None, :]).reshape(n, -1)
    J_out = np.hstack([H, np.ones((n, 1))])
    return np.hstack([J_hidden, J_out])


def _lm_step(J, r, lam):
    """Solve (J^T J + lam I) dw = -J^T r, via the smaller normal system."""
    n, p = J.shape
    if n < p:
        A = J @ J.T
        A[np.diag_indices_from(A)] += lam
        z = linalg.cho_solve(linalg.cho_factor(A, lower=True, check_finite=False), r)
        return -(J.T @ z)
    A = J.T @ J
    A[np.diag_indices_from(A)] += lam
    return -linalg.cho_solve(linalg.cho_factor(A, lower=True, check_finite=False), J.T @ r)


def train_lm(model: MlpModel, X, y, config: LmConfig = LmConfig(), trace: list | None = None,
             X_val=None, y_val=None):
    """Levenberg-Marquardt on the squared error.

    Returns ``(trained_model, final_train_mse)``. If ``trace`` is a list,
    the MSE after initialisation and after every accepted step is appended
    to it. With validation rows, training stops after ``config.max_fail``
    accepted steps without a new best validation MSE and the best
    validation weights are returned.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1:
        raise ValueError("need at least one training row")
    w = model.flat()
    current = model
    err = mse(predict(current, X), y)
    if not math.isfinite(err):
        raise TrainingDivergedError("initial loss is not finite")
    if trace is not None:
        trace.append(err)
    lam = config.initial_damping
    watch = X_val is not None and len(X_val) > 0
    if watch:
        X_val = np.atleast_2d(np.asarray(X_val, dtype=float))
        y_val = np.asarray(y_val, dtype=float)
        best = (mse(predict(current, X_val), y_val), current, err)
        fails = 0
    for epoch in range(config.max_epochs):
        J = jacobian(current, X)
        r = predict(current, X) - y
        accepted = False
        while lam <= config.max_damping:
            try:
                dw = _lm_step(J, r, lam)
            except linalg.LinAlgError:
                lam *= config.damping_up
                continue
            cand = current.with_flat(w + dw) if np.isfinite(dw).all() else None
            cand_err = mse(predict(cand, X), y) if cand is not None else math.inf
            if cand_err < err:
                accepted = True
                break
            lam *= config.damping_up
        if not accepted:
            break
        if not math.isfinite(cand_err):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        improvement = err - cand_err
        w, current, err = w + dw, cand, cand_err
        lam = max(lam / config.damping_down, 1e-20)
        if trace is not None:
            trace.append(err)
        if watch:
            v = mse(predict(current, X_val), y_val)
            if v < best[0]:
                best, fails = (v, current, err), 0
            else:
                fails += 1
                if fails >= config.max_fail:
                    break
        if improvement < config.convergence_tol:
            break
    if watch:
        return best[1], best[2]
    return current, err


def penalized_cost(epsilon: float, n_selected: int, omega: float) -> float:
    return epsilon * (1.0 + omega * n_selected)


class CostFunction:
    """Feature-subset cost bound to one dataset.

    The inner split is fixed at construction so every mask is judged on the
    same held-out rows. With ``init="per_call"`` (default) a per-call
    ``seed`` drives a fresh initialisation and ``lm.seed`` is used when none
    is given. With ``init="per_feature"`` the cost is a deterministic function
    of the mask and the per-call seed is ignored.
    Instances are picklable for process pools.
    """

    def __init__(self, dataset: Dataset, config: CostConfig = CostConfig()):
        self.dataset = dataset
        self.config = config
        spec = SplitSpec(config.inner_train_fraction, True, config.inner_split_seed)
        self.train, self.valid = stratified_split(dataset, spec)
        self.stop = None
        if config.lm.early_stopping_fraction > 0:
            spec = SplitSpec(1.0 - config.lm.early_stopping_fraction, True, config.inner_split_seed + 1)
            self.train, self.stop = stratified_split(self.train, spec)

    @property
    def n_features(self) -> int:
        return self.dataset.m

    def __call__(self, mask, seed: int | None = None) -> CostValue:
        mask = np.asarray(mask).astype(bool)
        k = int(mask.sum())
        cfg = self.config
        if k == 0:
            return CostValue(cfg.worst_cost, cfg.worst_cost, 0)
        tr = project(self.train, mask)
        va = project(self.valid, mask)
        if cfg.init == "per_feature":
            model = init_mlp_for_mask(mask, cfg.hidden_dim, cfg.lm.seed)
        else:
            model = init_mlp(k, cfg.hidden_dim, cfg.lm.seed if seed is None else seed)
        if self.stop is not None:
            st = project(self.stop, mask)
            model, _ = train_lm(model, tr.X, tr.y, cfg.lm, X_val=st.X, y_val=st.y)
        else:
            model, _ = train_lm(model, tr.X, tr.y, cfg.lm)
        out = predict(model, va.X)
        if cfg.clip_predictions:
            out = np.clip(out, 0.0, 1.0)
        eps = mse(out, va.y)
        return CostValue(eps, penalized_cost(eps, k, cfg.omega), k)


def evaluate_cost(dataset: Dataset, mask, config: CostConfig = CostConfig(),
                  init_seed: int | None = None) -> CostValue:
    """One-shot version of :class:`CostFunction`."""
    return CostFunction(dataset, config)(mask, init_seed)


def with_omega(config: CostConfig, omega: float) -> CostConfig:
    return replace(config, omega=omega)
