"""Binary genetic algorithm for wrapper feature selection.

Parents are drawn by roulette wheel from Boltzmann probabilities whose
pressure ``beta`` is re-calibrated every generation so that the better half
of the population holds a fixed share of the probability mass. Offspring
come from a randomly chosen crossover operator (single point, double point
or uniform), mutants from independent bit flips, and survivors are the
best ``population_size`` individuals of the merged pool.
"""

from __future__ import annotations

import inspect
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .neuro import CostConfig, CostFunction, CostValue

__all__ = [
    "GaConfig",
    "GaResult",
    "BetaCalibration",
    "CROSSOVER_METHODS",
    "calibrate_beta",
    "boltzmann_probabilities",
    "top_half_mass",
    "roulette_select",
    "pick_crossover_method",
    "single_point",
    "double_point",
    "uniform_crossover",
    "crossover",
    "mutate",
    "init_population",
    "evolve",
    "run_ga",
]

CROSSOVER_METHODS = ("single", "double", "uniform")
BETA_MAX = 1e6


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 700
    max_iterations: int = 100
    crossover_rate: float = 0.8
    mutation_rate: float = 0.3
    per_gene_flip_prob: float | None = None  # None -> max(1/m, 0.01)
    crossover_method_probs: tuple = (0.4, 0.3, 0.3)
    target_top_half_mass: float = 0.7
    normalize_by_largest: bool = True
    nfe_budget: int | None = None
    seed: int = 0
    workers: int = 1
    cache: bool = False
    checkpoint_every: int | None = None
    checkpoint_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "crossover_method_probs", tuple(float(p) for p in self.crossover_method_probs))
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 4")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.per_gene_flip_prob is not None and not 0.0 < self.per_gene_flip_prob < 1.0:
            raise ValueError("per_gene_flip_prob must lie in (0, 1)")
        probs = self.crossover_method_probs
        if len(probs) != 3 or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("crossover_method_probs must be three non-negative numbers summing to 1")
        if not 0.5 < self.target_top_half_mass < 1.0:
            raise ValueError("target_top_half_mass must lie in (0.5, 1)")
        if self.nfe_budget is not None and self.nfe_budget < self.population_size:
            raise ValueError("nfe_budget must cover the initial population")
        if self.checkpoint_every is not None and (self.checkpoint_every < 1 or not self.checkpoint_path):
            raise ValueError("checkpointing needs checkpoint_every >= 1 and a checkpoint_path")

    def flip_prob(self, m: int) -> float:
        return self.per_gene_flip_prob if self.per_gene_flip_prob is not None else max(1.0 / m, 0.01)

    @property
    def n_crossover_pairs(self) -> int:
        return _half_up(self.crossover_rate * self.population_size / 2)

    @property
    def n_mutants(self) -> int:
        return _half_up(self.mutation_rate * self.population_size)


@dataclass
class GaResult:
    best_mask: np.ndarray
    best_cost: float
    best_cost_trajectory: list
    nfe_trajectory: list
    nfe_used: int
    seed: int
    beta_trajectory: list = field(default_factory=list)
    best_n_selected: list = field(default_factory=list)
    population: np.ndarray | None = None
    population_costs: np.ndarray | None = None
    wall_time: float = 0.0

    @property
    def n_selected(self) -> int:
        return int(self.best_mask.sum())

    def to_dict(self) -> dict:
        return {
            "best_mask": [int(v) for v in self.best_mask],
            "best_cost": self.best_cost,
            "n_selected": self.n_selected,
            "best_cost_trajectory": list(self.best_cost_trajectory),
            "nfe_trajectory": list(self.nfe_trajectory),
            "beta_trajectory": list(self.beta_trajectory),
            "nfe_used": self.nfe_used,
            "seed": self.seed,
        }


class BetaCalibration(NamedTuple):
    beta: float
    degenerate: bool


# ---------------------------------------------------------------------------
# selection

def _scaled(costs, largest_cost):
    costs = np.asarray(costs, dtype=float)
    if not np.isfinite(costs).all():
        raise ValueError("costs must be finite")
    if largest_cost is None:
        return costs
    if largest_cost <= 0:
        return np.zeros_like(costs)
    return costs / largest_cost


def boltzmann_probabilities(costs, beta: float, largest_cost: float | None = None) -> np.ndarray:
    """``p_i ~ exp(-beta * J_i / largest_cost)``; ``largest_cost=None`` uses raw costs."""
    z = -beta * _scaled(costs, largest_cost)
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def top_half_mass(sorted_costs, beta: float, largest_cost: float | None = None) -> float:
    p = boltzmann_probabilities(sorted_costs, beta, largest_cost)
    return float(p[: len(p) // 2].sum())


def calibrate_beta(sorted_costs, target_mass: float = 0.7, normalized: bool = True) -> BetaCalibration:
    """Bisection for the pressure giving the best half ``target_mass`` of the
    Boltzmann probability.

    ``sorted_costs`` must be ascending. When the mass cannot reach the
    target (all costs equal, or ties straddling the half boundary), the
    result carries ``degenerate=True``.
    """
    c = np.asarray(sorted_costs, dtype=float)
    if np.any(np.diff(c) < 0):
        raise ValueError("costs must be sorted ascending")
    if not 0.5 < target_mass < 1.0:
        raise ValueError("target_mass must lie in (0.5, 1)")
    largest = float(c.max()) if normalized else None
    if c[-1] == c[0]:
        return BetaCalibration(0.0, True)
    if top_half_mass(c, BETA_MAX, largest) < target_mass:
        return BetaCalibration(BETA_MAX, True)
    lo, hi = 0.0, BETA_MAX
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        mass = top_half_mass(c, mid, largest)
        if mass < target_mass:
            lo = mid
        else:
            hi = mid
        if abs(mass - target_mass) < 1e-12 or hi - lo <= 1e-15 * max(1.0, hi):
            break
    return BetaCalibration(mid, False)


def roulette_select(probabilities, rng: np.random.Generator) -> int:
    """First index whose cumulative probability reaches one uniform draw."""
    p = np.asarray(probabilities, dtype=float)
    cum = np.cumsum(p)
    u = rng.random() * cum[-1]
    i = int(np.searchsorted(cum, u, side="left"))
    i = min(i, len(p) - 1)
    while p[i] == 0 and i < len(p) - 1:
        i += 1
    return i


def pick_crossover_method(method_probs, rng: np.random.Generator) -> str:
    return CROSSOVER_METHODS[roulette_select(method_probs, rng)]


# ---------------------------------------------------------------------------
# variation

def single_point(p1, p2, cut: int):
    o1 = np.concatenate([p1[:cut], p2[cut:]])
    o2 = np.concatenate([p2[:cut], p1[cut:]])
    return o1, o2


def double_point(p1, p2, a: int, b: int):
    o1, o2 = p1.copy(), p2.copy()
    o1[a:b], o2[a:b] = p2[a:b], p1[a:b]
    return o1, o2


def uniform_crossover(p1, p2, xi):
    xi = np.asarray(xi, dtype=bool)
    return np.where(xi, p2, p1), np.where(xi, p1, p2)


def crossover(p1, p2, method: str, rng: np.random.Generator):
    p1 = np.asarray(p1, dtype=bool)
    p2 = np.asarray(p2, dtype=bool)
    m = p1.size
    if p2.size != m:
        raise ValueError("parents differ in length")
    if m < 2:
        raise ValueError("crossover needs at least two genes")
    if method == "single":
        return single_point(p1, p2, int(rng.integers(1, m)))
    if method == "double":
        a, b = np.sort(rng.choice(np.arange(1, m + 1), size=2, replace=False))
        return double_point(p1, p2, int(a), int(b))
    if method == "uniform":
        return uniform_crossover(p1, p2, rng.random(m) < 0.5)
    raise ValueError(f"unknown crossover method {method!r}")


def mutate(position, per_gene_flip_prob: float, rng: np.random.Generator) -> np.ndarray:
    position = np.asarray(position, dtype=bool)
    out = position ^ (rng.random(position.size) < per_gene_flip_prob)
    if not out.any():
        out[rng.integers(position.size)] = True
    return out


# ---------------------------------------------------------------------------
# evaluation plumbing

def _as_cost(value) -> tuple[float, int | None]:
    if isinstance(value, CostValue):
        return float(value.j), value.n_selected
    return float(value), None


def _slot_seed(run_seed: int, generation: int, slot: int) -> int:
    ss = np.random.SeedSequence(run_seed, spawn_key=(generation, slot))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _accepts_seed(fn) -> bool:
    try:
        params = inspect.signature(fn).parameters.values()
    except (TypeError, ValueError):
        return True
    positional = [p for p in params if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)]
    return len(positional) >= 2 or any(p.kind == p.VAR_POSITIONAL for p in params)


def _call_cost(cost_fn, mask, seed, with_seed):
    return cost_fn(mask, seed) if with_seed else cost_fn(mask)


class _Evaluator:
    def __init__(self, cost_fn, config: GaConfig):
        self.cost_fn = cost_fn
        self.config = config
        self.cache: dict | None = {} if config.cache else None
        self.nfe = 0
        self.with_seed = _accepts_seed(cost_fn)

    def __call__(self, masks, generation):
        seeds = [_slot_seed(self.config.seed, generation, s) for s in range(len(masks))]
        results = [None] * len(masks)
        todo = []
        for i, mask in enumerate(masks):
            if self.cache is not None and mask.tobytes() in self.cache:
                results[i] = self.cache[mask.tobytes()]
            else:
                todo.append(i)
        if self.config.workers > 1 and len(todo) > 1:
            from joblib import Parallel, delayed
            out = Parallel(n_jobs=self.config.workers)(
                delayed(_call_cost)(self.cost_fn, masks[i], seeds[i], self.with_seed) for i in todo)
        else:
            out = [_call_cost(self.cost_fn, masks[i], seeds[i], self.with_seed) for i in todo]
        for i, value in zip(todo, out):
            results[i] = _as_cost(value)
            if self.cache is not None:
                self.cache[masks[i].tobytes()] = results[i]
        self.nfe += len(todo)
        costs = np.array([r[0] for r in results])
        nsel = np.array([r[1] if r[1] is not None else int(m.sum()) for r, m in zip(results, masks)])
        return costs, nsel


class _Population:
    """Positions, costs and sort keys; kept sorted ascending."""

    def __init__(self, positions, costs, nsel, order):
        self.positions = positions
        self.costs = costs
        self.nsel = nsel
        self.order = order

    def sort_truncate(self, size):
        # cost, then fewer features, then insertion order
        idx = np.lexsort((self.order, self.nsel, self.costs))[:size]
        return _Population(self.positions[idx], self.costs[idx], self.nsel[idx], self.order[idx])

    def merged(self, other):
        return _Population(np.vstack([self.positions, other.positions]),
                           np.concatenate([self.costs, other.costs]),
                           np.concatenate([self.nsel, other.nsel]),
                           np.concatenate([self.order, other.order]))


def init_population(population_size: int, m: int, seed: int, cost_fn, config: GaConfig | None = None):
    """Random non-empty, pairwise distinct chromosomes, evaluated and sorted.

    Returns ``(positions, costs)`` with rows ascending by cost.
    """
    if config is None:
        config = GaConfig(population_size=population_size, seed=seed)
    pop, _, _ = _initial(population_size, m, np.random.default_rng(seed), _Evaluator(cost_fn, config))
    return pop.positions, pop.costs


def _initial(size, m, rng, evaluate):
    if m < 2:
        raise ValueError("need at least two features")
    distinct = size <= 2 ** min(m, 62) - 1
    seen, rows = set(), []
    while len(rows) < size:
        v = rng.random(m) < 0.5
        if not v.any():
            continue
        if distinct and v.tobytes() in seen:
            continue
        seen.add(v.tobytes())
        rows.append(v)
    positions = np.array(rows)
    costs, nsel = evaluate(positions, 0)
    pop = _Population(positions, costs, nsel, np.arange(size)).sort_truncate(size)
    return pop, size, evaluate.nfe


# ---------------------------------------------------------------------------
# main loop

def _checkpoint(path, state):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(state, fh)
    os.replace(tmp, path)


def _state(pop, rng, it, next_order, traj, nfe_traj, betas, nsel_traj, nfe):
    return {
        "iteration": it,
        "positions": ["".join("1" if b else "0" for b in row) for row in pop.positions],
        "costs": pop.costs.tolist(),
        "nsel": pop.nsel.tolist(),
        "order": pop.order.tolist(),
        "next_order": next_order,
        "rng": rng.bit_generator.state,
        "trajectory": traj,
        "nfe_trajectory": nfe_traj,
        "beta_trajectory": betas,
        "n_selected_trajectory": nsel_traj,
        "nfe": nfe,
    }


def evolve(cost_fn: Callable, n_features: int, config: GaConfig = GaConfig(),
           callback: Callable | None = None, resume: dict | str | None = None) -> GaResult:
    """Minimise ``cost_fn`` over non-empty binary masks of length ``n_features``.

    ``cost_fn(mask, seed)`` returns a float or a :class:`CostValue`; the seed
    is derived from (run seed, generation, slot) so serial and parallel
    schedules agree. ``callback(iteration, result_so_far)`` is invoked after
    every generation. ``resume`` is a checkpoint dict or path.
    """
    t0 = time.perf_counter()
    m = n_features
    flip = config.flip_prob(m)
    evaluate = _Evaluator(cost_fn, config)
    budget = config.nfe_budget

    if resume is not None:
        if isinstance(resume, (str, os.PathLike)):
            with open(resume) as fh:
                resume = json.load(fh)
        pop = _Population(np.array([[c == "1" for c in s] for s in resume["positions"]]),
                          np.array(resume["costs"], float), np.array(resume["nsel"]),
                          np.array(resume["order"]))
        rng = np.random.default_rng()
        rng.bit_generator.state = resume["rng"]
        start, next_order = resume["iteration"] + 1, resume["next_order"]
        traj, nfe_traj = list(resume["trajectory"]), list(resume["nfe_trajectory"])
        betas, nsel_traj = list(resume["beta_trajectory"]), list(resume["n_selected_trajectory"])
        evaluate.nfe = resume["nfe"]
    else:
        rng = np.random.default_rng(config.seed)
        try:
            pop, next_order, _ = _initial(config.population_size, m, rng, evaluate)
        except Exception as exc:
            raise RuntimeError(f"cost evaluation failed in generation 0: {exc}") from exc
        start = 1
        traj, nfe_traj, betas, nsel_traj = [float(pop.costs[0])], [evaluate.nfe], [], [int(pop.nsel[0])]

    size = config.population_size
    for it in range(start, config.max_iterations + 1):
        if budget is not None and evaluate.nfe >= budget:
            break
        beta, _ = calibrate_beta(pop.costs, config.target_top_half_mass, config.normalize_by_largest)
        largest = float(pop.costs.max()) if config.normalize_by_largest else None
        probs = boltzmann_probabilities(pop.costs, beta, largest)

        children = []
        for _ in range(config.n_crossover_pairs):
            a = roulette_select(probs, rng)
            b = roulette_select(probs, rng)
            method = pick_crossover_method(config.crossover_method_probs, rng)
            children.extend(crossover(pop.positions[a], pop.positions[b], method, rng))
        for _ in range(config.n_mutants):
            children.append(mutate(pop.positions[roulette_select(probs, rng)], flip, rng))
        if budget is not None:
            children = children[: budget - evaluate.nfe]
        if not children:
            break

        positions = np.array(children)
        try:
            costs, nsel = evaluate(positions, it)
        except Exception as exc:
            raise RuntimeError(f"cost evaluation failed in generation {it}: {exc}") from exc
        order = np.arange(next_order, next_order + len(children))
        next_order += len(children)
        pop = pop.merged(_Population(positions, costs, nsel, order)).sort_truncate(size)

        traj.append(float(pop.costs[0]))
        nfe_traj.append(evaluate.nfe)
        betas.append(float(beta))
        nsel_traj.append(int(pop.nsel[0]))
        if config.checkpoint_every and it % config.checkpoint_every == 0:
            _checkpoint(config.checkpoint_path,
                        _state(pop, rng, it, next_order, traj, nfe_traj, betas, nsel_traj, evaluate.nfe))
        if callback is not None:
            callback(it, _result(pop, traj, nfe_traj, betas, nsel_traj, evaluate.nfe, config, t0))

    return _result(pop, traj, nfe_traj, betas, nsel_traj, evaluate.nfe, config, t0)


def _result(pop, traj, nfe_traj, betas, nsel_traj, nfe, config, t0):
    return GaResult(
        best_mask=pop.positions[0].copy(),
        best_cost=float(pop.costs[0]),
        best_cost_trajectory=list(traj),
        nfe_trajectory=list(nfe_traj),
        nfe_used=nfe,
        seed=config.seed,
        beta_trajectory=list(betas),
        best_n_selected=list(nsel_traj),
        population=pop.positions.copy(),
        population_costs=pop.costs.copy(),
        wall_time=time.perf_counter() - t0,
    )


def run_ga(dataset, ga_config: GaConfig = GaConfig(), cost_config: CostConfig = CostConfig(),
           **kwargs) -> GaResult:
    """Select features of ``dataset`` with the MLP-based subset cost."""
    return evolve(CostFunction(dataset, cost_config), dataset.m, ga_config, **kwargs)


def config_dict(config: GaConfig) -> dict:
    d = asdict(config)
    d["crossover_method_probs"] = list(config.crossover_method_probs)
    return d
