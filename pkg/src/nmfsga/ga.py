"""Multi-niche NSGA-II over feature-membership masks.

Objectives, both minimised:

* ``f1`` -- mean held-out loss of an LDA wrapper over a fixed stratified
  fold assignment, computed on noisy labels;
* ``f2`` -- number of selected features.

Each niche is an independent NSGA-II population. Every
``ceil(migration_interval_fraction * G)`` generations the niches exchange
elites around a ring: niche ``i`` copies its top ``ceil(fraction * C)``
members over the bottom of niche ``i + 1``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from . import kernels
from . import rng as _rng
from .classifier import DEFAULT_SHRINKAGE, PROB_CLAMP, ls_scale
from .data import Dataset, FoldAssignment, stratified_kfold
from .loss import LossSpec, MetricError, PredictionBatch, estimate_centroid, eval_loss
from .pareto import (
    Individual,
    assign_rank_and_crowding,
    crowded_order,
    environmental_selection,
    fast_nondominated_sort,
    tournament_select,
)

# Above this many columns the per-fold cross-products are built per call
# instead of once for the whole matrix.
PRECOMPUTE_MAX_FEATURES = 1500


@dataclass(frozen=True)
class GaConfig:
    population_per_niche: int = 100
    niches: int = 4
    generations: int = 1000
    crossover_rate: float = 0.5
    mutation_rate: float | None = None  # None means 1/d
    crossover_probability: float = 0.9
    init_density: float = 0.02
    migration_interval_fraction: float = 0.05
    migration_fraction: float = 0.25
    cv_folds: int = 10
    shrinkage: float = DEFAULT_SHRINKAGE
    loss: LossSpec = field(default_factory=LossSpec)
    seed: int = 0

    def __post_init__(self):
        if self.population_per_niche < 2 or self.population_per_niche % 2:
            raise ValueError("population_per_niche must be an even number >= 2")
        if self.niches < 1 or self.generations < 1:
            raise ValueError("niches and generations must be at least 1")
        for name in ("crossover_rate", "crossover_probability", "shrinkage"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if not 0.0 < self.init_density < 1.0:
            raise ValueError("init_density must lie in (0, 1)")
        for name in ("migration_interval_fraction", "migration_fraction"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossSpec(**self.loss))
        object.__setattr__(self, "seed", _rng.check_seed(self.seed))

    @property
    def migration_interval(self) -> int:
        return max(1, math.ceil(self.migration_interval_fraction * self.generations - 1e-9))

    def replace(self, **changes) -> "GaConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["loss"] = self.loss.to_dict()
        return out


# ---------------------------------------------------------------------------
# Fitness
# ---------------------------------------------------------------------------


class FitnessEvaluator:
    """Cross-validated ``f1`` for masks over one dataset and fold assignment.

    Per-(fold, class) sufficient statistics of the column-centred matrix are
    built once, so each evaluation only gathers a ``p x p`` block per fold.
    Results are memoised by mask.
    """

    def __init__(self, ds: Dataset, loss: LossSpec, folds: FoldAssignment, shrinkage=DEFAULT_SHRINKAGE):
        if folds.fold_index.shape != (ds.n_samples,):
            raise ValueError("fold assignment does not match the dataset")
        self.loss = loss
        self.shrinkage = float(shrinkage)
        self.n_features = ds.n_features
        self.y = np.asarray(ds.noisy_labels, dtype=np.int64)
        self.fold = folds.fold_index
        self.k = folds.k
        self.Xc = np.ascontiguousarray(ds.features - ds.features.mean(axis=0))
        self.test_idx = [folds.test_indices(f) for f in range(self.k)]
        self.counts = np.zeros((self.k, 2), dtype=np.int64)
        self._rows = [[np.flatnonzero((self.fold == f) & (self.y == c)) for c in (0, 1)] for f in range(self.k)]
        for f in range(self.k):
            for c in (0, 1):
                self.counts[f, c] = self._rows[f][c].size
        self.n_train = self.counts.sum() - self.counts.sum(axis=1)
        self.precomputed = ds.n_features <= PRECOMPUTE_MAX_FEATURES
        if self.precomputed:
            self.cross, self.sums = self._stats(self.Xc)
        self.cache: dict[bytes, float] = {}
        self.n_evaluations = 0

    def _stats(self, Xs):
        d = Xs.shape[1]
        cross = np.empty((self.k, 2, d, d))
        sums = np.empty((self.k, 2, d))
        for f in range(self.k):
            for c in (0, 1):
                block = Xs[self._rows[f][c]]
                cross[f, c] = block.T @ block
                sums[f, c] = block.sum(axis=0)
        return cross, sums

    def fold_fits(self, cols):
        cols = np.asarray(cols, dtype=np.int64)
        if self.precomputed:
            return kernels.cv_lda(self.cross, self.sums, self.counts, self.Xc, cols, self.fold, self.shrinkage)
        Xs = np.ascontiguousarray(self.Xc[:, cols])
        cross, sums = self._stats(Xs)
        local = np.arange(cols.size, dtype=np.int64)
        return kernels.cv_lda(cross, sums, self.counts, Xs, local, self.fold, self.shrinkage)

    def __call__(self, mask) -> float:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n_features,):
            raise ValueError(f"mask length {mask.size} does not match {self.n_features} columns")
        key = mask.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        value = self._evaluate(np.flatnonzero(mask))
        self.cache[key] = value
        return value

    def _evaluate(self, cols) -> float:
        self.n_evaluations += 1
        if cols.size == 0:
            return math.inf
        fits = self.fold_fits(cols)
        if self.loss.kind == "PL" and self.loss.peer_sampling:
            losses = self.reference_fold_losses(cols, fits)
        else:
            losses = self.fold_losses(fits)
        losses = losses[np.isfinite(losses)]
        return float(losses.mean()) if losses.size else math.inf

    def fold_losses(self, fits) -> np.ndarray:
        """Held-out loss of every fold at once; NaN for skipped folds."""
        scores, W, bias, quad, prior1, wxbar, ok = fits
        spec = self.loss
        fold, y, k = self.fold, self.y, self.k
        ok = ok.astype(bool)
        live = ok[fold]
        s = np.where(live, scores, 0.0)
        h = np.clip(expit(s), PROB_CLAMP, 1.0 - PROB_CLAMP)
        n = np.bincount(fold, minlength=k).astype(float)
        n_pos = np.bincount(fold, weights=y, minlength=k)
        n_neg = n - n_pos
        both = (n_pos > 0) & (n_neg > 0)

        def fmean(v):
            return np.bincount(fold, weights=v, minlength=k) / n

        kind = spec.kind
        if kind in ("BA", "PL"):
            pred = (h > 0.5).astype(float)
            if kind == "BA":
                with np.errstate(invalid="ignore", divide="ignore"):
                    sen = np.bincount(fold, weights=pred * y, minlength=k) / n_pos
                    spe = np.bincount(fold, weights=(1.0 - pred) * (1 - y), minlength=k) / n_neg
                out = 1.0 - 0.5 * (sen + spe)
                ok = ok & both
            else:
                # Same integer-count form as the reference implementation.
                errors = np.bincount(fold, weights=pred != y, minlength=k)
                n_pred1 = np.bincount(fold, weights=pred, minlength=k)
                out = (n * errors - (n_neg * n_pred1 + n_pos * (n - n_pred1))) / (n * n)
        elif kind == "CE":
            out = fmean(-np.where(y == 1, np.log(h), np.log1p(-h)))
        elif kind == "SCE":
            a = spec.alpha
            out = fmean(-(a * y * np.log(h) + (1.0 - a) * (1 - y) * np.log1p(-h)))
        elif kind == "GCE":
            target = np.where(y == 1, h, 1.0 - h)
            out = fmean((1.0 - target**spec.q) / spec.q)
        elif kind == "JOL":
            ce = fmean(-np.where(y == 1, np.log(h), np.log1p(-h)))
            prior = np.stack([n_neg / n, n_pos / n])
            hbar = fmean(h)
            mean_pred = np.stack([1.0 - hbar, hbar])
            with np.errstate(invalid="ignore", divide="ignore"):
                terms = np.where(prior > 0, prior * np.log(prior / mean_pred), 0.0)
            out = ce + spec.alpha * terms.sum(axis=0) + spec.beta * np.einsum("fj,fj->f", W, W)
        else:  # CWD
            p1 = prior1
            c = ls_scale(p1, quad, self.n_train)
            b_ls = (2.0 * p1 - 1.0) - c * wxbar
            # Least-squares line along the LDA direction, intercept included:
            # <mu_aug, w_aug> reduces to the signed mean of these scores.
            f = np.where(live, c[fold] * (s - bias[fold]) + b_ls[fold], 0.0)
            signed = (2.0 * y - 1.0) * f / (1.0 - 2.0 * spec.assumed_noise_rate)
            out = fmean(f * f) + 1.0 + spec.Q * fmean(signed)
            ok = ok & both
        return np.where(ok, out, np.nan)

    def reference_fold_losses(self, cols, fits) -> np.ndarray:
        """Per-fold :func:`eval_loss` on explicit batches (slow reference path)."""
        scores, W, bias, quad, prior1, wxbar, ok = fits
        spec = self.loss
        out = np.full(self.k, np.nan)
        for f in np.flatnonzero(ok):
            test = self.test_idx[f]
            s = scores[test]
            y = self.y[test]
            probs = np.clip(expit(s), PROB_CLAMP, 1.0 - PROB_CLAMP)
            extra = {}
            if spec.kind == "JOL":
                extra["model_weights"] = W[f]
            elif spec.kind == "CWD":
                p1 = prior1[f]
                c = ls_scale(p1, quad[f], self.n_train[f])
                b_ls = (2.0 * p1 - 1.0) - c * wxbar[f]
                extra["scores"] = c * (s - bias[f]) + b_ls
                extra["model_weights"] = np.append(c * W[f], b_ls)
                Xt = np.hstack([self.Xc[np.ix_(test, cols)], np.ones((test.size, 1))])
                try:
                    extra["centroid_estimate"] = estimate_centroid(Xt, y, spec.assumed_noise_rate)
                except ValueError:
                    continue
            rng = _rng.stream(0, _rng.PEERS, int(f))
            try:
                out[f] = eval_loss(spec, PredictionBatch(probs, y, **extra), rng)
            except MetricError:
                continue
        return out


def evaluate_objectives(chrom, ds: Dataset, loss: LossSpec, folds: FoldAssignment, shrinkage=DEFAULT_SHRINKAGE):
    """``(f1, f2)`` of one mask; see :class:`FitnessEvaluator`."""
    mask = np.asarray(chrom, dtype=bool)
    return FitnessEvaluator(ds, loss, folds, shrinkage)(mask), int(mask.sum())


# ---------------------------------------------------------------------------
# Variation operators
# ---------------------------------------------------------------------------


def repair(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Switch on one uniformly chosen bit of an empty mask (in place)."""
    if not mask.any():
        mask[rng.integers(mask.size)] = True
    return mask


def binomial_crossover(p1, p2, cr: float, rng: np.random.Generator) -> np.ndarray:
    p1 = np.asarray(p1, dtype=bool)
    p2 = np.asarray(p2, dtype=bool)
    if p1.shape != p2.shape:
        raise ValueError("parents must have equal length")
    child = np.where(rng.random(p1.size) < cr, p1, p2)
    return repair(child, rng)


def mutate(chrom, pm: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= pm <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    child = np.asarray(chrom, dtype=bool) ^ (rng.random(np.size(chrom)) < pm)
    return repair(child, rng)


def migrate(niches: list[list[Individual]], fraction: float) -> list[list[Individual]]:
    """Ring migration: copies of each niche's elite overwrite the next niche's worst."""
    if len(niches) < 2:
        return [list(pop) for pop in niches]
    size = len(niches[0])
    n_mig = min(size, math.ceil(fraction * size - 1e-9))
    migrants = []
    for pop in niches:
        order = crowded_order(pop)
        migrants.append([pop[i].copy() for i in order[:n_mig]])
    out = []
    for r, pop in enumerate(niches):
        incoming = migrants[r - 1]
        order = crowded_order(pop)
        new = list(pop)
        for slot, ind in zip(order[size - n_mig :], incoming):
            new[slot] = ind
        assign_rank_and_crowding(new)
        out.append(new)
    return out


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ParetoResult:
    front: list[Individual]
    history: list[list[float]]
    config: GaConfig
    seed: int
    n_evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "front": [ind.to_dict() for ind in self.front],
            "history": self.history,
            "config": self.config.to_dict(),
            "seed": self.seed,
        }


def _evaluate_all(pop, evaluator):
    for ind in pop:
        ind.f1 = evaluator(ind.mask)
        ind.f2 = int(ind.mask.sum())


def _evolve(pop, evaluator, config, pm, rng):
    offspring = []
    for _ in range(config.population_per_niche):
        if rng.random() < config.crossover_probability:
            a = tournament_select(pop, rng)
            b = tournament_select(pop, rng)
            child = binomial_crossover(a.mask, b.mask, config.crossover_rate, rng)
        else:
            child = mutate(tournament_select(pop, rng).mask, pm, rng)
        offspring.append(Individual(child))
    _evaluate_all(offspring, evaluator)
    return environmental_selection(pop + offspring, config.population_per_niche)


def run_nmfs_ga(
    ds: Dataset,
    config: GaConfig,
    folds: FoldAssignment | None = None,
    callback: Callable[[int, list[list[Individual]]], None] | None = None,
) -> ParetoResult:
    """Evolve ``config.niches`` populations and return the merged rank-0 front.

    ``folds`` defaults to a stratified assignment seeded from ``config.seed``
    and is shared by every fitness evaluation. ``callback(generation,
    niches)`` is invoked after each generation's migration step.
    """
    d = ds.n_features
    pm = config.mutation_rate if config.mutation_rate is not None else 1.0 / d
    seed = config.seed
    if folds is None:
        folds = stratified_kfold(ds, config.cv_folds, _rng.derive_seed(seed, _rng.FOLDS))
    evaluator = FitnessEvaluator(ds, config.loss, folds, config.shrinkage)
    C = config.population_per_niche

    niches = []
    for n in range(config.niches):
        gen = _rng.stream(seed, n, 0, _rng.INIT)
        masks = gen.random((C, d)) < config.init_density
        pop = [Individual(repair(m, gen)) for m in masks]
        _evaluate_all(pop, evaluator)
        assign_rank_and_crowding(pop)
        niches.append(pop)
    history = [[min(ind.f1 for ind in pop)] for pop in niches]

    interval = config.migration_interval
    for g in range(1, config.generations + 1):
        niches = [
            _evolve(pop, evaluator, config, pm, _rng.stream(seed, n, g, _rng.VARIATION))
            for n, pop in enumerate(niches)
        ]
        for n, pop in enumerate(niches):
            history[n].append(min(ind.f1 for ind in pop))
        if config.niches > 1 and g % interval == 0 and g < config.generations:
            niches = migrate(niches, config.migration_fraction)
        if callback is not None:
            callback(g, niches)

    return ParetoResult(merged_front(niches), history, config, seed, evaluator.n_evaluations)


def merged_front(niches: list[list[Individual]]) -> list[Individual]:
    """Rank-0 members of all niches together, first occurrence of each mask kept."""
    seen: set[bytes] = set()
    pool = []
    for pop in niches:
        for ind in pop:
            if ind.key not in seen:
                seen.add(ind.key)
                pool.append(ind.copy())
    objs = np.array([ind.objectives for ind in pool], dtype=float)
    front = [pool[i] for i in fast_nondominated_sort(objs)[0]]
    assign_rank_and_crowding(front)
    return front


def _bitstring(mask) -> str:
    return "".join("1" if b else "0" for b in np.asarray(mask, dtype=bool))


def select_final(result: ParetoResult | list[Individual]) -> Individual:
    """Front member with least f1; ties by fewer features, then smallest bit string."""
    front = result.front if isinstance(result, ParetoResult) else list(result)
    if not front:
        raise ValueError("cannot select from an empty front")
    return min(front, key=lambda ind: (ind.f1, ind.f2, _bitstring(ind.mask)))
