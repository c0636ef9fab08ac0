"""Library assembly and elastic-net sparse regression.

A population of expression trees is evaluated into a library matrix over
the identification segment, standardized (zero mean, unit l2 norm; the
constant bias column is exempt because target centering absorbs it), and
solved over a grid of elastic-net penalties with cyclic coordinate descent.
Supports are refit without penalty and scored on the validation head; the
winner is the model with the smallest validation percent error, ties broken
toward smaller support and then larger l1 penalty.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .expr import ExpressionTree, constant, eval_columns, parse_expression

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap

__all__ = [
    "AllModelsEmpty",
    "ColumnCache",
    "DidNotConverge",
    "EmptyLibrary",
    "LibraryMatrix",
    "RegressionConfig",
    "SparseModel",
    "ZeroSignalNorm",
    "build_library",
    "elastic_net",
    "elastic_net_objective",
    "model_from_record",
    "model_to_record",
    "percent_error",
    "sweep_and_select",
]

# Relative centered-norm below which a column counts as constant.
_CONSTANT_RTOL = 1e-12
# Two standardized columns whose |correlation| exceeds 1 minus this are
# treated as one direction and deduplicated.  On chirp-response data the
# physically distinct oscillator terms stay below 0.92 pairwise correlation
# while same-shape renderings and odd-power neighbours of a kept term (for
# example sgn(q) q^4 against q^3) sit above 0.976; a cutoff at 0.97 splits
# the two groups with margin on both sides.
_COLLINEAR_TOL = 0.03
# Gram eigenvalues below this count as an exact linear dependence among
# standardized columns (each has unit norm, so the scale is dimensionless).
_RANK_TOL = 1e-10
# Decimals kept when fingerprinting standardized columns for the
# cross-generation smallest-representative registry.
_FINGERPRINT_DECIMALS = 12


def _nonsmooth_nodes(tree):
    count = 1 if tree.kind in ("abs", "sgn") else 0
    return count + sum(_nonsmooth_nodes(child) for child in tree.children)


def _canonical_rank(tree):
    """Ordering that decides which rendering names a column class.

    Renderings free of nonsmooth operations come first: a smooth polynomial
    and an abs/sgn composition can agree to 0.98 correlation on oscillator
    data, and when they share a class the smooth member is the one whose
    coefficient stays physically interpretable.  Size then key break ties
    deterministically.
    """
    return (_nonsmooth_nodes(tree), tree.size, tree.key)


class EmptyLibrary(Exception):
    """Every candidate column was dropped while building the library."""


class AllModelsEmpty(Exception):
    """Every penalty grid point shrank the support to nothing."""


class ZeroSignalNorm(Exception):
    """Percent error is undefined against an all-zero reference."""


class DidNotConverge(Exception):
    """Coordinate descent hit the iteration cap.

    Carries the last iterate so callers may still use it, flagged.
    """

    def __init__(self, coef, n_iter):
        super().__init__(f"coordinate descent did not converge in {n_iter} sweeps")
        self.coef = coef
        self.n_iter = n_iter


@dataclass(frozen=True)
class RegressionConfig:
    """Penalty grids and solver settings for the sparse regression step."""

    lambda1_grid: tuple[float, ...] = (
        1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0,
    )
    lambda2_grid: tuple[float, ...] = (0.0, 1e-4, 1e-2, 1.0)
    threshold: float = 1e-3
    # With collinear columns merged at build time, coordinate descent at this
    # tolerance leaves coefficient errors of at most tol/(1 - rho^2), about
    # 1e-5 in standardized units at the dedup cutoff, well under the support
    # threshold.
    tol: float = 1e-8
    max_iter: int = 20000
    # Near-tie tolerance (absolute, in percent): models within this band of
    # the best validation error count as ties and resolve to parsimony,
    # both inside the sweep and across generations.
    tie_floor: float = 1e-6
    # Within the sweep, models whose validation error lands within this many
    # sampling standard errors of the best are statistically indistinguishable
    # on the one validation record available, so the tie resolves to
    # parsimony.  The percent-error estimate has relative standard error of
    # about 1/sqrt(2 n_val) when the residual is noise-dominated; two such
    # deviations still sit an order of magnitude below the cost of dropping
    # a genuine term, which stays above five percent relative even at the
    # noisiest operating points.
    tie_se: float = 2.0

    def __post_init__(self):
        if not self.lambda1_grid or not self.lambda2_grid:
            raise ValueError("penalty grids must be non-empty")
        if min(self.lambda1_grid) < 0 or min(self.lambda2_grid) < 0:
            raise ValueError("penalties must be non-negative")
        if self.threshold <= 0:
            raise ValueError("support threshold must be positive")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("need a positive tolerance and at least one sweep")
        if self.tie_floor < 0 or self.tie_se < 0:
            raise ValueError("tie tolerances must be non-negative")


class _CacheEntry:
    __slots__ = (
        "key", "finite", "column", "mean", "scale", "raw_norm", "dot_y",
        "fingerprint",
    )

    def __init__(self, key):
        self.key = key
        self.finite = False
        self.column = None
        self.mean = 0.0
        self.scale = 0.0
        self.raw_norm = 0.0
        self.dot_y = 0.0
        self.fingerprint = None

    @property
    def is_constant(self):
        return self.scale <= _CONSTANT_RTOL * max(self.raw_norm, 1e-300)


class ColumnCache:
    """Memoizes tree evaluations over one SignalSet, keyed by canonical string.

    Scalar statistics (means, norms, single-term fit error, content hash)
    are kept for every tree ever seen; the column arrays themselves are held
    under an LRU cap and re-evaluated on demand.
    """

    def __init__(self, signals, max_arrays=384):
        self.signals = signals
        self._X = signals.state_matrix()
        self._id = signals.id_slice
        self._y_id = signals.qddot[signals.id_slice]
        self._entries = {}
        self._lru = OrderedDict()
        self._max_arrays = max(int(max_arrays), 8)
        # Smallest expression observed for each standardized column content,
        # keyed by fingerprint.  Lets later libraries name a column class by
        # the most compact rendering seen anywhere in the run.
        self._smallest = {}
        self.hits = 0
        self.misses = 0

    def lookup(self, tree):
        entry = self._entries.get(tree.key)
        if entry is None:
            self.misses += 1
            entry = _CacheEntry(tree.key)
            self._entries[tree.key] = entry
            column = eval_columns(tree, self._X, check=False)
            entry.finite = bool(np.isfinite(column).all())
            if entry.finite:
                self._fill_stats(entry, column)
                self._store(entry, column)
        else:
            self.hits += 1
            if entry.finite and entry.column is None:
                self._store(entry, eval_columns(tree, self._X, check=False))
            elif entry.finite:
                self._lru.move_to_end(entry.key)
        return entry

    def id_column(self, tree):
        return self.lookup(tree).column[self._id]

    def _fingerprint(self, tree):
        entry = self.lookup(tree)
        if not entry.finite or entry.is_constant:
            return None
        if entry.fingerprint is None:
            std = (entry.column[self._id] - entry.mean) / entry.scale
            rounded = np.round(std, _FINGERPRINT_DECIMALS)
            entry.fingerprint = hashlib.sha1(rounded.tobytes()).digest()
        return entry.fingerprint

    def smallest_rendering(self, tree):
        """Return the most compact expression seen so far whose standardized
        column matches this tree's, registering the tree as a candidate."""
        fp = self._fingerprint(tree)
        if fp is None:
            return tree
        known = self._smallest.get(fp)
        if known is None or _canonical_rank(tree) < _canonical_rank(known):
            self._smallest[fp] = tree
            return tree
        return known

    def _fill_stats(self, entry, column):
        cid = column[self._id]
        entry.mean = float(cid.mean())
        entry.raw_norm = float(np.linalg.norm(cid))
        centered = cid - entry.mean
        entry.scale = float(np.linalg.norm(centered))
        entry.dot_y = float(cid @ self._y_id)

    def _store(self, entry, column):
        column.flags.writeable = False
        entry.column = column
        self._lru[entry.key] = entry
        self._lru.move_to_end(entry.key)
        while len(self._lru) > self._max_arrays:
            _, evicted = self._lru.popitem(last=False)
            evicted.column = None


@dataclass
class LibraryMatrix:
    """Evaluated candidate library over the identification segment.

    Column 0 is always the constant bias column.  ``col_offset`` and
    ``col_scale`` hold the standardization statistics (mean and centered l2
    norm; the bias column gets 0 and 1).  ``dropped`` records
    (population index, canonical string, reason) for every discarded
    individual.
    """

    trees: tuple[ExpressionTree, ...]
    columns: tuple[np.ndarray, ...]
    col_offset: np.ndarray
    col_scale: np.ndarray
    dropped: tuple[tuple[int, str, str], ...] = ()
    # (population key, library key) pairs for individuals whose column is
    # carried by a more compact rendering that is not in the population.
    aliases: tuple[tuple[str, str], ...] = ()
    _values: np.ndarray | None = field(default=None, repr=False)

    @property
    def m(self):
        return len(self.trees)

    @property
    def n(self):
        return self.columns[0].size

    @property
    def keys(self):
        return tuple(tree.key for tree in self.trees)

    @property
    def values(self):
        if self._values is None:
            self._values = np.column_stack(self.columns)
        return self._values

    def standardized(self):
        """Non-bias columns centered and scaled to unit l2 norm."""
        out = np.empty((self.n, self.m - 1))
        for j in range(1, self.m):
            out[:, j - 1] = (self.columns[j] - self.col_offset[j]) / self.col_scale[j]
        return out


def build_library(population, signals, cache=None):
    """Evaluate a population into a deduplicated library matrix.

    Drops non-finite columns, constant columns (the prepended bias column
    already covers them), canonical-string duplicates, and columns that are
    numerically collinear with a kept column after standardization (scalar
    multiples of either sign, offsets included).  Each collinear class is
    represented by the smallest tree that maps onto it, so a plain variable
    outranks any bloated equivalent; with a shared cache the class keeps the
    most compact rendering seen in any earlier call as well.  Raises
    EmptyLibrary when nothing survives.
    """
    population = list(population)
    if not population:
        raise ValueError("population must be non-empty")
    if cache is None:
        cache = ColumnCache(signals)
    n_id = signals.n - signals.split

    candidates = []
    dropped = []
    seen_keys = {constant(1.0).key}
    for index, tree in enumerate(population):
        entry = cache.lookup(tree)
        if not entry.finite:
            dropped.append((index, tree.key, "non-finite"))
            continue
        if entry.is_constant:
            reason = "zero" if entry.raw_norm == 0.0 else "constant"
            dropped.append((index, tree.key, reason))
            continue
        if tree.key in seen_keys:
            dropped.append((index, tree.key, "duplicate"))
            continue
        seen_keys.add(tree.key)
        candidates.append((index, tree, entry))
    if not candidates:
        raise EmptyLibrary(
            f"all {len(population)} candidate columns dropped "
            f"({_drop_summary(dropped)})"
        )

    # Group candidates into collinear classes by pairwise correlation of the
    # standardized columns, then keep the best-ranked tree of each class.
    # Candidates are visited in canonical-rank order so every class is
    # founded by its preferred member; classes never merge, so two distinct
    # kept terms cannot be bridged into one class by a column that straddles
    # them.
    Z = np.empty((n_id, len(candidates)))
    for j, (_, _, entry) in enumerate(candidates):
        Z[:, j] = entry.column[signals.id_slice]
        Z[:, j] -= entry.mean
        Z[:, j] /= entry.scale
    corr = Z.T @ Z
    order = sorted(
        range(len(candidates)),
        key=lambda j: _canonical_rank(candidates[j][1]),
    )
    classes = []
    reps = []
    for j in order:
        for ci, rep in enumerate(reps):
            if abs(corr[j, rep]) >= 1.0 - _COLLINEAR_TOL:
                classes[ci].append(j)
                break
        else:
            classes.append([j])
            reps.append(j)

    kept = []
    aliases = []
    for members in classes:
        winner = members[0]
        # A run may have seen a more compact expression with this exact
        # column content in an earlier population; prefer that rendering.
        index, tree, entry = candidates[winner]
        rep = cache.smallest_rendering(tree)
        if rep.key != tree.key:
            rep_entry = cache.lookup(rep)
            if rep_entry.finite and not rep_entry.is_constant:
                # The rendering is not in the population, so record which
                # individuals stand in for its column.
                for j in members:
                    aliases.append((candidates[j][1].key, rep.key))
                candidates[winner] = (index, rep, rep_entry)
        kept.append(winner)
        for j in members:
            if j != winner:
                index, tree, _ = candidates[j]
                dropped.append((index, tree.key, "collinear"))
    kept.sort()

    # Columns that are exact linear combinations of other kept columns add
    # no direction, only redundant representations that confuse support
    # selection.  Peel them off a null vector at a time, sacrificing the
    # largest tree involved in each dependence.
    while len(kept) > 1:
        sub = corr[np.ix_(kept, kept)]
        eigvals, eigvecs = np.linalg.eigh(sub)
        if eigvals[0] > _RANK_TOL:
            break
        null = np.abs(eigvecs[:, 0])
        involved = [
            kept[i] for i in np.flatnonzero(null > 1e-6 * null.max())
        ]
        victim = max(
            involved,
            key=lambda j: (candidates[j][1].size, candidates[j][1].key),
        )
        kept.remove(victim)
        index, tree, _ = candidates[victim]
        dropped.append((index, tree.key, "dependent"))

    trees = [constant(1.0)]
    columns = [np.ones(n_id)]
    offsets = [0.0]
    scales = [1.0]
    for j in kept:
        _, tree, entry = candidates[j]
        trees.append(tree)
        columns.append(entry.column[signals.id_slice])
        offsets.append(entry.mean)
        scales.append(entry.scale)
    return LibraryMatrix(
        trees=tuple(trees),
        columns=tuple(columns),
        col_offset=np.array(offsets),
        col_scale=np.array(scales),
        dropped=tuple(dropped),
        aliases=tuple(aliases),
    )


def _drop_summary(dropped):
    counts = {}
    for _, _, reason in dropped:
        counts[reason] = counts.get(reason, 0) + 1
    return ", ".join(f"{reason}: {count}" for reason, count in sorted(counts.items()))


@njit(cache=True)
def _cd_kernel(G, c, lam1, lam2, tol, max_iter, xi):
    """Cyclic coordinate descent on the gram form of the elastic net."""
    m = xi.shape[0]
    half_l1 = 0.5 * lam1
    for sweep in range(max_iter):
        delta = 0.0
        for j in range(m):
            old = xi[j]
            rho = c[j] - np.dot(G[j], xi) + G[j, j] * old
            denom = G[j, j] + lam2
            if denom <= 0.0:
                new = 0.0
            elif rho > half_l1:
                new = (rho - half_l1) / denom
            elif rho < -half_l1:
                new = (rho + half_l1) / denom
            else:
                new = 0.0
            if new != old:
                xi[j] = new
                diff = abs(new - old)
                if diff > delta:
                    delta = diff
        if delta < tol:
            return sweep + 1, True
    return max_iter, False


def _cd_solve(G, c, lam1, lam2, tol, max_iter, xi=None):
    if xi is None:
        xi = np.zeros(c.size)
    iters, converged = _cd_kernel(
        np.ascontiguousarray(G), np.ascontiguousarray(c),
        float(lam1), float(lam2), float(tol), int(max_iter), xi,
    )
    return xi, iters, converged


def elastic_net(A, y, lam1, lam2, cfg=None):
    """Minimize ||A xi - y||^2 + lam1 ||xi||_1 + lam2 ||xi||_2^2.

    A is expected column-standardized (zero mean, unit l2 norm) with a
    centered target, although the solver itself is general.  Raises
    DidNotConverge (carrying the last iterate) when the sweep cap is hit.
    """
    cfg = cfg or RegressionConfig()
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam1 < 0 or lam2 < 0:
        raise ValueError("penalties must be non-negative")
    G = A.T @ A
    c = A.T @ y
    xi, iters, converged = _cd_solve(G, c, lam1, lam2, cfg.tol, cfg.max_iter)
    if not converged:
        raise DidNotConverge(xi, iters)
    return xi


def elastic_net_objective(A, y, xi, lam1, lam2):
    residual = A @ xi - y
    return float(
        residual @ residual + lam1 * np.abs(xi).sum() + lam2 * (xi @ xi)
    )


@dataclass(frozen=True)
class SparseModel:
    """Identified sparse model: a weighted sum of expression terms.

    ``terms`` holds (tree, coefficient) pairs in library order, coefficients
    in original target units after the unpenalized refit.  A constant term
    (the refit intercept) appears only when its magnitude clears the support
    threshold scaled by the target RMS.
    """

    terms: tuple[tuple[ExpressionTree, float], ...]
    lambda1: float
    lambda2: float
    training_mse: float
    validation_error: float
    converged: bool = True

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a sparse model needs at least one term")
        if any(coef == 0.0 for _, coef in self.terms):
            raise ValueError("model coefficients must be non-zero")

    @property
    def support(self):
        """Canonical strings of the non-constant terms."""
        return tuple(tree.key for tree, _ in self.terms if tree.kind != "const")

    def coefficient(self, key):
        for tree, coef in self.terms:
            if tree.key == key:
                return coef
        raise KeyError(key)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for tree, coef in self.terms:
            out += coef * eval_columns(tree, X)
        return out

    def equation(self, lhs="qddot"):
        parts = [f"{coef:+.6g}*{tree.key}" for tree, coef in self.terms]
        return f"{lhs} = " + " ".join(parts)


def percent_error(model, signals):
    """Normalized l2 prediction error (in percent) on the validation head.

    The model terms are evaluated on the measured (q, qdot, zddot) columns
    and compared against the measured qddot.
    """
    if not model.terms:
        raise ValueError("cannot score an empty model")
    sl = signals.val_slice
    reference = signals.qddot[sl]
    norm = float(np.linalg.norm(reference))
    if norm == 0.0:
        raise ZeroSignalNorm("validation target has zero norm")
    prediction = model.predict(signals.state_matrix()[sl])
    return 100.0 * float(np.linalg.norm(prediction - reference)) / norm


def sweep_and_select(lib, signals, cfg=None, cache=None):
    """Grid-sweep the elastic net and select a model on the validation head.

    For every (lambda1, lambda2) grid point the standardized-coefficient
    support is thresholded, refit without penalty, and scored by percent
    error on the validation segment; when refitting drops coefficients back
    under the threshold, the reduced support is scored as a further
    candidate.  The best model wins; near-ties go to the smaller term
    count, then the larger lambda1, then the smaller total tree size.
    Raises AllModelsEmpty when every grid point shrinks to an empty
    support.
    """
    cfg = cfg or RegressionConfig()
    if lib.m < 2:
        raise EmptyLibrary("library holds only the bias column")
    y_id = signals.qddot[signals.id_slice]
    n_id = y_id.size
    y_mean = float(y_id.mean())
    yc = y_id - y_mean
    yty = float(yc @ yc)
    rms_y = math.sqrt(yty / n_id)
    y_val = signals.qddot[signals.val_slice]
    val_norm = float(np.linalg.norm(y_val))
    if val_norm == 0.0:
        raise ZeroSignalNorm("validation target has zero norm")

    # Solve in doubly normalized space: unit-norm columns against a
    # unit-norm target.  The penalty grid then spans the whole path (full
    # shrinkage near lambda1 = 2) for any data scale, and the support
    # threshold reads as a fraction of the signal scale.
    y_norm = math.sqrt(yty)
    if y_norm == 0.0:
        raise ZeroSignalNorm("identification target is constant")
    Xs = lib.standardized()
    G = Xs.T @ Xs
    c = Xs.T @ (yc / y_norm)
    offsets = lib.col_offset[1:]
    scales = lib.col_scale[1:]

    # Validation columns for the candidate terms, fetched lazily.
    val_columns = {}

    def val_column(j):
        col = val_columns.get(j)
        if col is None:
            tree = lib.trees[j + 1]
            if cache is not None:
                col = cache.lookup(tree).column[signals.val_slice]
            else:
                col = eval_columns(tree, signals.state_matrix()[signals.val_slice])
            val_columns[j] = col
        return col

    grid_runs = []
    for lam2 in cfg.lambda2_grid:
        xi = np.zeros(lib.m - 1)
        for lam1 in sorted(cfg.lambda1_grid, reverse=True):
            xi, _, converged = _cd_solve(G, c, lam1, lam2, cfg.tol, cfg.max_iter, xi)
            support = tuple(np.flatnonzero(np.abs(xi) > cfg.threshold).tolist())
            grid_runs.append((lam1, lam2, support, converged))

    refits = {}

    def refit(support):
        info = refits.get(support)
        if info is not None:
            return info
        S = list(support)
        G_S = G[np.ix_(S, S)]
        c_S = c[S] * y_norm
        beta_norm, _, _, _ = np.linalg.lstsq(G_S, c_S / y_norm, rcond=None)
        beta_std = beta_norm * y_norm
        rss = yty - 2.0 * float(beta_std @ c_S) + float(beta_std @ G_S @ beta_std)
        training_mse = max(rss, 0.0) / n_id
        coef = beta_std / scales[S]
        intercept = y_mean - float(coef @ offsets[S])
        if abs(intercept) <= cfg.threshold * rms_y:
            intercept = 0.0
        prediction = np.full(y_val.size, intercept)
        for j, cj in zip(S, coef):
            prediction += cj * val_column(j)
        error = 100.0 * float(np.linalg.norm(prediction - y_val)) / val_norm
        info = (coef, intercept, training_mse, error, beta_norm)
        refits[support] = info
        return info

    def make_candidate(order, lam1, lam2, support, converged):
        coef, intercept, training_mse, error, beta_norm = refit(support)
        n_terms = len(support) + (1 if intercept != 0.0 else 0)
        complexity = sum(lib.trees[j + 1].size for j in support)
        complexity += 1 if intercept != 0.0 else 0
        return (error, n_terms, -lam1, complexity, order, support, coef,
                intercept, training_mse, lam1, lam2, converged)

    candidates = []
    n_grid = len(grid_runs)
    for order, (lam1, lam2, support, converged) in enumerate(grid_runs):
        if not support:
            continue
        candidates.append(make_candidate(order, lam1, lam2, support, converged))
        # Penalty shrinkage on the large coefficients leaks weight into
        # correlated columns; after the unpenalized refit such terms fall
        # back under the support threshold.  Offer the reduced support as an
        # additional candidate (one pass, keeping the original too).
        beta_norm = refits[support][4]
        reduced = tuple(
            j for j, b in zip(support, beta_norm) if abs(b) > cfg.threshold
        )
        if reduced and reduced != support:
            candidates.append(
                make_candidate(n_grid + order, lam1, lam2, reduced, converged)
            )
    if not candidates:
        raise AllModelsEmpty(
            f"support empty at all {len(grid_runs)} penalty grid points"
        )

    best_error = min(cand[0] for cand in candidates)
    # One validation record estimates the percent error with relative
    # sampling standard error about 1/sqrt(2 n_val); errors closer than
    # cfg.tie_se of those are ties and resolve to the sparser model.
    se_rel = cfg.tie_se / math.sqrt(2.0 * y_val.size)
    tie_limit = best_error * (1.0 + se_rel) + cfg.tie_floor
    winner = min(
        (cand for cand in candidates if cand[0] <= tie_limit),
        key=lambda cand: (cand[1], cand[2], cand[3], cand[4]),
    )
    (error, _, _, _, _, support, coef, intercept, training_mse,
     lam1, lam2, converged) = winner

    terms = [(lib.trees[j + 1], float(cj)) for j, cj in zip(support, coef)]
    if intercept != 0.0:
        terms.append((constant(1.0), float(intercept)))
    return SparseModel(
        terms=tuple(terms),
        lambda1=float(lam1),
        lambda2=float(lam2),
        training_mse=float(training_mse),
        validation_error=float(error),
        converged=bool(converged),
    )


def model_to_record(model):
    """Serialize a model to a stable, re-ingestable text record."""
    lines = [
        "format = esparse-model-v1",
        f"terms = {len(model.terms)}",
    ]
    for i, (tree, coef) in enumerate(model.terms):
        lines.append(f"term{i}.expr = {tree.key}")
        lines.append(f"term{i}.coef = {coef:.17g}")
    lines.append(f"lambda1 = {model.lambda1:.17g}")
    lines.append(f"lambda2 = {model.lambda2:.17g}")
    lines.append(f"training_mse = {model.training_mse:.17g}")
    lines.append(f"validation_error = {model.validation_error:.17g}")
    lines.append(f"converged = {'true' if model.converged else 'false'}")
    return "\n".join(lines) + "\n"


def model_from_record(text):
    """Parse a record produced by model_to_record."""
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed record line {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    if fields.get("format") != "esparse-model-v1":
        raise ValueError("not an esparse model record")
    count = int(fields["terms"])
    terms = []
    for i in range(count):
        tree = parse_expression(fields[f"term{i}.expr"])
        coef = float(fields[f"term{i}.coef"])
        terms.append((tree, coef))
    return SparseModel(
        terms=tuple(terms),
        lambda1=float(fields["lambda1"]),
        lambda2=float(fields["lambda2"]),
        training_mse=float(fields["training_mse"]),
        validation_error=float(fields["validation_error"]),
        converged=fields.get("converged", "true") == "true",
    )
