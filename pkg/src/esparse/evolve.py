"""Evolutionary library construction around the sparse regression step.

Each generation, the population of candidate terms is assembled into a
library, the elastic-net sweep selects a sparse model on the validation
head, and fitness flows back: individuals whose column sits in the selected
support all share the model's training MSE, everyone else is scored by the
best single-term fit of its own column to the model's training residual.
Columns aligned with what the model still misses therefore rank right
behind the support, which steers the search toward absent terms.
Tournament selection with elitism then produces the next population through
subtree crossover and mutation.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .expr import PrimitiveSet, constant, crossover, default_primitives, mutate, random_tree
from .sparsereg import (
    ColumnCache,
    EmptyLibrary,
    RegressionConfig,
    SparseModel,
    build_library,
    sweep_and_select,
)

__all__ = [
    "EsparseResult",
    "GPConfig",
    "GenerationRecord",
    "assign_fitness",
    "esparse_run",
    "gp_only_run",
    "next_generation",
    "residual_fits",
    "tournament_pick",
]

logger = logging.getLogger(__name__)

# Training MSE below this fraction of the centered target power counts as
# an exact fit, switching the evolution into its compaction phase.
_DISTILL_RTOL = 1e-10


@dataclass(frozen=True)
class GPConfig:
    """Genetic-programming settings for one identification run."""

    population_size: int = 80
    generations: int = 30
    p_crossover: float = 0.9
    p_mutation: float = 0.1
    tournament_size: int = 3
    elite_fraction: float = 0.05
    max_depth: int = 6
    primitives: PrimitiveSet = field(default_factory=default_primitives)
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population needs at least two individuals")
        if self.generations < 1:
            raise ValueError("need at least one generation")
        for name in ("p_crossover", "p_mutation"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.p_crossover + self.p_mutation > 1.0 + 1e-12:
            raise ValueError("operator probabilities must sum to at most 1")
        if not 0.0 <= self.elite_fraction <= 1.0:
            raise ValueError("elite_fraction must lie in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament needs at least one entrant")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")

    @property
    def n_elite(self):
        return math.ceil(self.elite_fraction * self.population_size)


@dataclass(frozen=True)
class GenerationRecord:
    """Per-generation progress: this generation's model and the running best."""

    generation: int
    validation_error: float
    best_error: float
    support_size: int
    library_size: int


@dataclass(frozen=True)
class EsparseResult:
    best: SparseModel
    history: tuple[GenerationRecord, ...]
    seed: int
    wall_time: float


def assign_fitness(population, model, residual_fit):
    """Fitness per individual, lower is better.

    Individuals whose canonical string appears in the selected support share
    the model's training MSE.  Everyone else scores the model MSE plus the
    best affine fit of its own column to the model's training residual
    (``residual_fit``, keyed by canonical string), so a column matching the
    residual exactly ties the support, partially aligned columns rank just
    behind, and uninformative ones trail by the full residual power.
    Columns absent from ``residual_fit`` (non-finite) get the worst fitness.
    """
    support = set(model.support)
    fitness = np.empty(len(population))
    for i, tree in enumerate(population):
        if tree.key in support:
            fitness[i] = model.training_mse
        else:
            fitness[i] = model.training_mse + residual_fit.get(tree.key, math.inf)
    return fitness


def residual_fits(population, model, cache, signals, aliases=()):
    """Best affine-fit MSE of each column against the model's residual.

    Returns a dict keyed by canonical string covering every finite
    individual outside the selected support.  The residual is taken on the
    identification segment.  ``aliases`` maps population strings to library
    strings for individuals whose column entered the library under a more
    compact rendering; when that rendering is in the support they fit the
    residual perfectly by construction and score zero.
    """
    y_id = signals.qddot[signals.id_slice]
    n = y_id.size
    r = y_id.astype(float, copy=True)
    for tree, coef in model.terms:
        r -= coef * cache.id_column(tree)
    rc = r - r.mean()
    rr = float(rc @ rc)
    support = set(model.support)
    alias_map = dict(aliases)
    fits = {}
    for tree in population:
        if tree.key in fits or tree.key in support:
            continue
        if alias_map.get(tree.key) in support:
            fits[tree.key] = 0.0
            continue
        entry = cache.lookup(tree)
        if not entry.finite:
            continue
        sxx = entry.scale**2
        if sxx <= 0.0:
            fits[tree.key] = rr / n
            continue
        # rc has zero mean, so the centered cross moment is a plain dot.
        sxr = float(cache.id_column(tree) @ rc)
        fits[tree.key] = max(rr - sxr * sxr / sxx, 0.0) / n
    return fits


def tournament_pick(population, fitness, size, rng, sizes=None):
    """Index of the fittest among ``size`` uniformly drawn entrants.

    When ``sizes`` is given, exact fitness ties go to the smaller tree.
    """
    entrants = rng.integers(0, len(population), size=size)
    best = int(entrants[0])
    for idx in entrants[1:]:
        idx = int(idx)
        if fitness[idx] < fitness[best]:
            best = idx
        elif sizes is not None and fitness[idx] == fitness[best]:
            if sizes[idx] < sizes[best]:
                best = idx
    return best


# Offspring duplicating an already-admitted canonical string are redrawn
# this many times before being accepted anyway.
_DUP_RETRIES = 8


def next_generation(population, fitness, gp, rng, parsimony=False):
    """Elites survive unchanged; tournament winners breed the rest.

    Each remaining slot draws one uniform variate: crossover with
    probability p_crossover (filling two slots when room remains), else
    mutation with probability p_mutation, else plain reproduction.
    Offspring whose canonical string is already present in the new
    population are redrawn a few times, which keeps duplicates from
    flooding out structural diversity.  With ``parsimony`` enabled, fitness
    ties (elite ordering and tournaments) resolve toward smaller trees; the
    caller switches this on once the model explains the data exactly and
    compaction is all that is left.
    """
    if parsimony:
        sizes = np.array([tree.size for tree in population])
        order = np.lexsort((sizes, fitness))
    else:
        sizes = None
        order = np.argsort(fitness, kind="stable")
    out = [population[i] for i in order[: gp.n_elite]]
    seen = {tree.key for tree in out}
    size = gp.population_size

    def pick():
        i = tournament_pick(population, fitness, gp.tournament_size, rng, sizes)
        return population[i]

    while len(out) < size:
        offspring = []
        for attempt in range(_DUP_RETRIES):
            u = rng.random()
            if u < gp.p_crossover:
                batch = crossover(pick(), pick(), gp.primitives, gp.max_depth, rng)
            elif u < gp.p_crossover + gp.p_mutation:
                batch = (mutate(pick(), gp.primitives, gp.max_depth, rng),)
            else:
                batch = (pick(),)
            offspring = [tree for tree in batch if tree.key not in seen]
            if offspring:
                break
        if not offspring:
            offspring = [batch[0]]
        for tree in offspring:
            if len(out) < size:
                out.append(tree)
                seen.add(tree.key)
    return out


def _random_population(gp, rng):
    """Ramped initialization: depth budgets cycle over 2..max_depth."""
    budget = list(range(min(2, gp.max_depth), gp.max_depth + 1))
    return [
        random_tree(gp.primitives, budget[i % len(budget)], rng)
        for i in range(gp.population_size)
    ]


def _progress_line(record):
    return (
        f"gen={record.generation} best_error={record.best_error:.6g} "
        f"support={record.support_size} library={record.library_size}"
    )


def _model_complexity(model):
    return sum(tree.size for tree, _ in model.terms)


def _improves(model, best, reg):
    """Whether ``model`` displaces the held best.

    Outside the near-tie band (``reg.tie_floor``, absolute percent) the
    lower validation error wins.  Within it the simpler model wins (fewer
    terms, then smaller total tree size, then lower error), so the held
    error can tick up by at most the band width when a leaner equivalent
    arrives.
    """
    if best is None:
        return True
    e_new, e_old = model.validation_error, best.validation_error
    if abs(e_new - e_old) <= reg.tie_floor:
        new_key = (len(model.terms), _model_complexity(model), e_new)
        old_key = (len(best.terms), _model_complexity(best), e_old)
        return new_key < old_key
    return e_new < e_old


def esparse_run(signals, gp=None, reg=None, progress=None):
    """Alternate library evolution and sparse regression; keep the best model.

    Runs ``gp.generations`` generations.  A mid-run generation whose library
    collapses (every column dropped) reinitializes the population and
    continues; an empty library at generation 0 aborts with EmptyLibrary.
    Results are bit-reproducible for a fixed seed.
    """
    gp = gp or GPConfig()
    reg = reg or RegressionConfig()
    started = time.perf_counter()
    rng = np.random.default_rng(gp.seed)
    cache = ColumnCache(signals)
    population = _random_population(gp, rng)

    y_id = signals.qddot[signals.id_slice]
    yc = y_id - y_id.mean()
    y_power = float(yc @ yc) / y_id.size

    best = None
    best_error = math.inf
    history = []
    for generation in range(gp.generations):
        try:
            lib = build_library(population, signals, cache=cache)
        except EmptyLibrary:
            if generation == 0:
                raise
            logger.warning(
                "library empty at generation %d; reinitializing population",
                generation,
            )
            population = _random_population(gp, rng)
            record = GenerationRecord(generation, math.inf, best_error, 0, 0)
            history.append(record)
            if progress is not None:
                progress(_progress_line(record))
            continue
        model = sweep_and_select(lib, signals, reg, cache=cache)
        if _improves(model, best, reg):
            best = model
            best_error = model.validation_error
        record = GenerationRecord(
            generation=generation,
            validation_error=model.validation_error,
            best_error=best_error,
            support_size=len(model.support),
            library_size=lib.m - 1,
        )
        history.append(record)
        if progress is not None:
            progress(_progress_line(record))
        if generation < gp.generations - 1:
            fits = residual_fits(population, model, cache, signals, lib.aliases)
            fitness = assign_fitness(population, model, fits)
            # Once the fit is exact to numerical precision the only job
            # left is compacting the expressions, so fitness ties start
            # resolving toward smaller trees.
            parsimony = model.training_mse <= _DISTILL_RTOL * y_power
            population = next_generation(population, fitness, gp, rng, parsimony)
    return EsparseResult(
        best=best,
        history=tuple(history),
        seed=gp.seed,
        wall_time=time.perf_counter() - started,
    )


def _affine_fit(entry, y_mean, yty_centered, n_id):
    """Best a, b and MSE for y ~ a*column + b on the identification segment.

    Constant columns (by the cache's relative test, which catches rounding
    residue in the centered norm) can only fit the mean; returning a = 0
    also keeps them out of the champion slot.
    """
    if entry.is_constant:
        return 0.0, y_mean, yty_centered / n_id
    sxx = entry.scale**2
    sxy = entry.dot_y - n_id * entry.mean * y_mean
    a = sxy / sxx
    b = y_mean - a * entry.mean
    rss = yty_centered - sxy * sxy / sxx
    return a, b, max(rss, 0.0) / n_id


def gp_only_run(signals, gp=None, progress=None):
    """Single-expression symbolic regression baseline.

    Same engine and operators, but each individual is scored directly by the
    MSE of its affine-scaled column against the target (no library, no
    sparse step).  Returns an EsparseResult whose best model is the
    affine-scaled best tree.
    """
    gp = gp or GPConfig()
    started = time.perf_counter()
    rng = np.random.default_rng(gp.seed)
    cache = ColumnCache(signals)
    y_id = signals.qddot[signals.id_slice]
    n_id = y_id.size
    y_mean = float(y_id.mean())
    yc = y_id - y_mean
    yty_centered = float(yc @ yc)
    y_val = signals.qddot[signals.val_slice]
    val_norm = float(np.linalg.norm(y_val))

    population = _random_population(gp, rng)
    best = None
    best_error = math.inf
    history = []
    for generation in range(gp.generations):
        fitness = np.empty(len(population))
        champion = None
        for i, tree in enumerate(population):
            entry = cache.lookup(tree)
            if not entry.finite:
                fitness[i] = math.inf
                continue
            a, b, mse = _affine_fit(entry, y_mean, yty_centered, n_id)
            fitness[i] = mse
            if a != 0.0 and (champion is None or mse < champion[0]):
                champion = (mse, tree, a, b)
        generation_error = math.inf
        if champion is not None:
            mse, tree, a, b = champion
            prediction = b + a * cache.lookup(tree).column[signals.val_slice]
            generation_error = (
                100.0 * float(np.linalg.norm(prediction - y_val)) / val_norm
            )
            if generation_error < best_error:
                terms = [(tree, a)]
                if b != 0.0:
                    terms.append((constant(1.0), b))
                best = SparseModel(
                    terms=tuple(terms),
                    lambda1=0.0,
                    lambda2=0.0,
                    training_mse=mse,
                    validation_error=generation_error,
                    converged=True,
                )
                best_error = generation_error
        record = GenerationRecord(
            generation=generation,
            validation_error=generation_error,
            best_error=best_error,
            support_size=1 if best is not None else 0,
            library_size=len(population),
        )
        history.append(record)
        if progress is not None:
            progress(_progress_line(record))
        if generation < gp.generations - 1:
            population = next_generation(population, fitness, gp, rng)
    if best is None:
        raise EmptyLibrary("no finite individual was ever scored")
    return EsparseResult(
        best=best,
        history=tuple(history),
        seed=gp.seed,
        wall_time=time.perf_counter() - started,
    )
