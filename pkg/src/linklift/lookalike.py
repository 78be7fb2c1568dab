"""Sparse (L1) logistic lookalike models.

The trainer minimizes  (1/n) * logistic loss + lambda * sum|coef|  over
standardized features with an unpenalized intercept, using an outer
quadratic approximation and cyclic coordinate descent with
soft-thresholding inside, warm-started along a geometric lambda grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DataError

_P_MIN = 1e-5          # probability clip, keeps IRLS weights bounded away from 0
_ETA_MAX = 35.0


@dataclass
class TrainingSet:
    """Labeled 50/50 feature matrix with group labels and provenance seed."""

    feature_names: list
    features: np.ndarray          # (n, d)
    labels: np.ndarray            # (n,) of 0/1
    groups: list
    seed: int
    ids: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    def subset(self, rows) -> "TrainingSet":
        rows = np.asarray(rows)
        return TrainingSet(
            feature_names=self.feature_names,
            features=self.features[rows],
            labels=self.labels[rows],
            groups=[self.groups[i] for i in rows],
            seed=self.seed,
            ids=[self.ids[i] for i in rows] if self.ids else [],
        )


@dataclass
class SparseModel:
    """L1-logistic fit: coefficients live on the standardized feature scale."""

    feature_names: list
    intercept: float
    coef: np.ndarray              # dense, mostly exact zeros
    lam: float
    converged: bool
    means: np.ndarray | None = None
    stds: np.ndarray | None = None

    def coefficient(self, name: str) -> float:
        return float(self.coef[self.feature_names.index(name)])

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.coef))


@dataclass
class CVResult:
    k: int
    lambda_star: float
    lambda_grid: list
    mean_val_loss: list
    oos_scores: np.ndarray        # one out-of-sample score per training row
    fold_of: np.ndarray           # fold index per training row
    fold_models: list             # k models at lambda_star


@dataclass
class TrainConfig:
    tolerance: float = 1e-7      # max coordinate update defining convergence
    max_iters: int = 100         # outer quadratic-approximation iterations
    standardize: bool = True


def build_training_set(matched_positive_ids, reference, seed: int) -> TrainingSet:
    """All matched reference rows as positives plus an equal count of
    never-matched rows sampled uniformly without replacement (seeded)."""
    if reference.features is None:
        raise DataError("reference records carry no feature columns")
    matched = set(matched_positive_ids)
    pos_rows = [i for i, r in enumerate(reference.records) if r.record_id in matched]
    neg_pool = [i for i, r in enumerate(reference.records) if r.record_id not in matched]
    if len(neg_pool) < len(pos_rows):
        raise DataError(
            f"only {len(neg_pool)} non-matched rows for {len(pos_rows)} positives")
    rng = np.random.default_rng(seed)
    neg_rows = sorted(rng.choice(len(neg_pool), size=len(pos_rows), replace=False))
    rows = pos_rows + [neg_pool[i] for i in neg_rows]
    labels = np.concatenate([np.ones(len(pos_rows)), np.zeros(len(pos_rows))])
    return TrainingSet(
        feature_names=list(reference.feature_names),
        features=reference.features[rows],
        labels=labels,
        groups=[reference.records[i].group for i in rows],
        seed=seed,
        ids=[reference.records[i].record_id for i in rows],
    )


def _standardize(x):
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    safe = np.where(stds > 0, stds, 1.0)
    return (x - means) / safe, means, safe


def _probs(eta):
    p = 1.0 / (1.0 + np.exp(-np.clip(eta, -_ETA_MAX, _ETA_MAX)))
    return np.clip(p, _P_MIN, 1.0 - _P_MIN)


def _soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def log_loss(y, p) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def objective(ts: TrainingSet, model: SparseModel) -> float:
    """Penalized objective on the model's own standardized scale."""
    x = ts.features
    if model.means is not None:
        x = (x - model.means) / model.stds
    eta = model.intercept + x @ model.coef
    p = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
    return log_loss(ts.labels, p) + model.lam * float(np.abs(model.coef).sum())


@njit(cache=True)
def _sweep(x, wr, w, wsq, beta, lam, inv_n, cols):
    """One coordinate-descent pass over ``cols``; returns the largest update."""
    max_step = 0.0
    for k in range(cols.shape[0]):
        j = cols[k]
        if wsq[j] == 0.0:
            continue
        bj = beta[j]
        xj = x[:, j]
        rho = np.dot(xj, wr) * inv_n + wsq[j] * bj
        if rho > lam:
            new = (rho - lam) / wsq[j]
        elif rho < -lam:
            new = (rho + lam) / wsq[j]
        else:
            new = 0.0
        if new != bj:
            beta[j] = new
            delta = new - bj
            for i in range(wr.shape[0]):
                wr[i] -= w[i] * xj[i] * delta
            if abs(delta) > max_step:
                max_step = abs(delta)
    return max_step


@njit(cache=True)
def _cd_kernel(x, x_sq, y, lam, tol, max_outer, beta, b0):
    """IRLS outer loop + coordinate descent inner loop at one lambda.

    x must be Fortran-ordered so column slices are contiguous.
    """
    n, d = x.shape
    inv_n = 1.0 / n
    all_cols = np.arange(d)
    converged = False
    inner_tol = tol * 0.1
    for _outer in range(max_outer):
        beta_prev = beta.copy()
        b0_prev = b0

        eta = np.zeros(n)
        for j in range(d):
            bj = beta[j]
            if bj != 0.0:
                xj = x[:, j]
                for i in range(n):
                    eta[i] += xj[i] * bj
        w = np.empty(n)
        wr = np.empty(n)
        w_sum = 0.0
        for i in range(n):
            e = eta[i] + b0
            if e > 35.0:
                e = 35.0
            elif e < -35.0:
                e = -35.0
            pi = 1.0 / (1.0 + np.exp(-e))
            if pi < 1e-5:
                pi = 1e-5
            elif pi > 1.0 - 1e-5:
                pi = 1.0 - 1e-5
            w[i] = pi * (1.0 - pi)
            wr[i] = y[i] - pi
            w_sum += w[i]
        wsq = np.empty(d)
        for j in range(d):
            wsq[j] = np.dot(x_sq[:, j], w) * inv_n

        for _round in range(1000):
            # full sweep (also the verification pass for the active set)
            shift = wr.sum() / w_sum
            if shift != 0.0:
                b0 += shift
                for i in range(n):
                    wr[i] -= w[i] * shift
            max_step = max(_sweep(x, wr, w, wsq, beta, lam, inv_n, all_cols),
                           abs(shift))
            if max_step < inner_tol:
                break
            active = np.flatnonzero(beta)
            for _spin in range(1000):
                shift = wr.sum() / w_sum
                if shift != 0.0:
                    b0 += shift
                    for i in range(n):
                        wr[i] -= w[i] * shift
                step = max(_sweep(x, wr, w, wsq, beta, lam, inv_n, active),
                           abs(shift))
                if step < inner_tol:
                    break

        outer_step = abs(b0 - b0_prev)
        for j in range(d):
            diff = abs(beta[j] - beta_prev[j])
            if diff > outer_step:
                outer_step = diff
        if outer_step < tol:
            converged = True
            break
    return b0, converged


def _cd_fit(x, y, lam, config, beta0, b0_0, x_sq=None):
    """Coordinate descent at one lambda. x must be column-contiguous."""
    if x_sq is None:
        x_sq = x * x
    beta = beta0.copy()
    b0, converged = _cd_kernel(x, x_sq, np.ascontiguousarray(y, dtype=np.float64),
                               lam, config.tolerance, config.max_iters,
                               beta, float(b0_0))
    return beta, b0, converged


def train_l1_logistic(ts: TrainingSet, lam: float,
                      config: TrainConfig | None = None) -> SparseModel:
    """Fit one sparse logistic model at penalty ``lam``.

    Non-convergence within max_iters returns a flagged partial model
    rather than raising.
    """
    config = config or TrainConfig()
    y = np.asarray(ts.labels, dtype=float)
    if len(np.unique(y)) < 2:
        raise DataError("training labels contain a single class")
    if not np.isfinite(ts.features).all():
        raise DataError("non-finite feature values in training set")
    if lam < 0:
        raise DataError("lambda must be >= 0")

    if config.standardize:
        x, means, stds = _standardize(np.asarray(ts.features, dtype=float))
    else:
        x, means, stds = np.asarray(ts.features, dtype=float), None, None
    x = np.asfortranarray(x)

    ybar = y.mean()
    b0 = float(np.log(ybar / (1.0 - ybar)))
    beta, b0, converged = _cd_fit(x, y, lam, config, np.zeros(x.shape[1]), b0)
    return SparseModel(feature_names=list(ts.feature_names), intercept=float(b0),
                       coef=beta, lam=lam, converged=converged,
                       means=means, stds=stds)


def default_lambda_grid(ts: TrainingSet, n_points: int = 50,
                        min_ratio: float = 1e-4) -> list:
    """Geometric grid from lambda_max (all coefficients zero) down to
    lambda_max * min_ratio."""
    x, _, _ = _standardize(np.asarray(ts.features, dtype=float))
    y = np.asarray(ts.labels, dtype=float)
    lam_max = float(np.max(np.abs(x.T @ (y - y.mean()))) / len(y))
    if lam_max <= 0:
        raise DataError("degenerate training set: lambda_max is 0")
    if n_points == 1:
        return [lam_max]
    ratios = np.geomspace(1.0, min_ratio, n_points)
    return [lam_max * r for r in ratios]


def regularization_path(ts: TrainingSet, lambda_grid,
                        config: TrainConfig | None = None) -> list:
    """Warm-started fits along a descending lambda grid."""
    config = config or TrainConfig()
    y = np.asarray(ts.labels, dtype=float)
    if len(np.unique(y)) < 2:
        raise DataError("training labels contain a single class")
    grid = sorted(lambda_grid, reverse=True)
    if any(l < 0 for l in grid):
        raise DataError("lambda must be >= 0")

    if config.standardize:
        x, means, stds = _standardize(np.asarray(ts.features, dtype=float))
    else:
        x, means, stds = np.asarray(ts.features, dtype=float), None, None
    x = np.asfortranarray(x)

    ybar = y.mean()
    beta = np.zeros(x.shape[1])
    b0 = float(np.log(ybar / (1.0 - ybar)))
    x_sq = x * x
    models = []
    for lam in grid:
        beta, b0, converged = _cd_fit(x, y, lam, config, beta, b0, x_sq)
        models.append(SparseModel(feature_names=list(ts.feature_names),
                                  intercept=float(b0), coef=beta.copy(),
                                  lam=lam, converged=converged,
                                  means=means, stds=stds))
    return models


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Deterministic fold assignment: shuffled positives then shuffled
    negatives dealt round-robin, so fold sizes and per-fold class counts
    each differ by at most 1."""
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise DataError("k must be >= 2")
    if k > n:
        raise DataError(f"k={k} exceeds {n} rows")
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels != 1)
    rng.shuffle(pos)
    rng.shuffle(neg)
    order = np.concatenate([pos, neg])
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % k
    return fold_of


def model_scores(model: SparseModel, x) -> np.ndarray:
    """Probabilities for raw feature rows, standardization folded in."""
    if model.means is not None:
        adj = model.coef / model.stds
        offset = model.intercept - float(model.means @ adj)
    else:
        adj = model.coef
        offset = model.intercept
    nz = np.flatnonzero(adj)
    eta = x[:, nz] @ adj[nz] + offset if len(nz) else np.full(len(x), offset)
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))


def cross_validate(ts: TrainingSet, k: int, lambda_grid, seed: int,
                   config: TrainConfig | None = None) -> CVResult:
    """k-fold CV over the lambda grid.

    lambda_star minimizes mean validation log-loss (ties go to the larger,
    sparser lambda); every row's out-of-sample score comes from the fold
    model that excluded it.
    """
    config = config or TrainConfig()
    grid = sorted(lambda_grid, reverse=True)
    fold_of = stratified_folds(ts.labels, k, seed)
    y = np.asarray(ts.labels, dtype=float)

    val_loss = np.zeros((k, len(grid)))
    paths = []
    for f in range(k):
        train_rows = np.flatnonzero(fold_of != f)
        val_rows = np.flatnonzero(fold_of == f)
        path = regularization_path(ts.subset(train_rows), grid, config)
        paths.append(path)
        x_val = ts.features[val_rows]
        for gi, model in enumerate(path):
            val_loss[f, gi] = log_loss(y[val_rows], model_scores(model, x_val))

    mean_loss = val_loss.mean(axis=0)
    star = int(np.argmin(mean_loss))          # grid is descending: tie -> sparser
    lam_star = grid[star]

    oos = np.empty(len(ts))
    fold_models = []
    for f in range(k):
        model = paths[f][star]
        fold_models.append(model)
        val_rows = np.flatnonzero(fold_of == f)
        oos[val_rows] = model_scores(model, ts.features[val_rows])

    return CVResult(k=k, lambda_star=lam_star, lambda_grid=list(grid),
                    mean_val_loss=mean_loss.tolist(), oos_scores=oos,
                    fold_of=fold_of, fold_models=fold_models)


def score_population(model: SparseModel, population) -> list:
    """(record_id, score) ranked by score descending, ties by id ascending."""
    if population.features is None:
        raise DataError("population records carry no feature columns")
    if list(population.feature_names) != list(model.feature_names):
        raise DataError("population feature columns do not match the model")
    scores = model_scores(model, population.features)
    pairs = [(r.record_id, float(s)) for r, s in zip(population.records, scores)]
    pairs.sort(key=lambda t: (-t[1], t[0]))
    return pairs


def selected_variables(model: SparseModel) -> list:
    """Nonzero (feature, coefficient) pairs, largest magnitude first."""
    nz = np.flatnonzero(model.coef)
    out = [(model.feature_names[j], float(model.coef[j])) for j in nz]
    out.sort(key=lambda t: (-abs(t[1]), t[0]))
    return out


# -- serialization -----------------------------------------------------------

MODEL_FORMAT = "linklift-model v1"


def save_model(model: SparseModel, path) -> None:
    """Single text file: version header, lambda/intercept, per-feature
    standardization stats, and sparse name,coefficient lines."""
    lines = [MODEL_FORMAT,
             f"lambda {model.lam!r}",
             f"intercept {model.intercept!r}",
             f"converged {int(model.converged)}",
             f"standardized {int(model.means is not None)}",
             "features:"]
    for j, name in enumerate(model.feature_names):
        if model.means is not None:
            lines.append(f"{name},{float(model.means[j])!r},{float(model.stds[j])!r}")
        else:
            lines.append(name)
    lines.append("coefficients:")
    for name, c in selected_variables(model):
        lines.append(f"{name},{c!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> SparseModel:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MODEL_FORMAT:
        raise DataError(f"not a model file: {path}")
    head = {}
    i = 1
    while i < len(lines) and lines[i] != "features:":
        k, v = lines[i].split(" ", 1)
        head[k] = v
        i += 1
    standardized = head.get("standardized") == "1"
    names, means, stds = [], [], []
    i += 1
    while i < len(lines) and lines[i] != "coefficients:":
        if standardized:
            name, m, s = lines[i].rsplit(",", 2)
            means.append(float(m))
            stds.append(float(s))
        else:
            name = lines[i]
        names.append(name)
        i += 1
    coef = np.zeros(len(names))
    index = {n: j for j, n in enumerate(names)}
    for ln in lines[i + 1:]:
        if not ln:
            continue
        name, v = ln.rsplit(",", 1)
        coef[index[name]] = float(v)
    return SparseModel(
        feature_names=names,
        intercept=float(head["intercept"]),
        coef=coef,
        lam=float(head["lambda"]),
        converged=head.get("converged") == "1",
        means=np.array(means) if standardized else None,
        stds=np.array(stds) if standardized else None,
    )


# -- training-set CSV --------------------------------------------------------

def write_training_csv(ts: TrainingSet, path) -> None:
    import polars as pl

    df = pl.DataFrame({
        "record_id": pl.Series(ts.ids or ["" for _ in range(len(ts))], dtype=pl.Utf8),
        "group": pl.Series(ts.groups, dtype=pl.Utf8),
        "label": pl.Series(ts.labels.astype(int)),
    })
    fdf = pl.from_numpy(ts.features, schema=["f_" + n for n in ts.feature_names])
    pl.concat([df, fdf], how="horizontal").write_csv(path)


def read_training_csv(path, seed: int = 0) -> TrainingSet:
    import polars as pl

    df = pl.read_csv(path, schema_overrides={"record_id": pl.Utf8, "group": pl.Utf8},
                     missing_utf8_is_empty_string=True)
    fcols = [c for c in df.columns if c.startswith("f_")]
    return TrainingSet(
        feature_names=[c[2:] for c in fcols],
        features=df.select(fcols).to_numpy().astype(float),
        labels=df["label"].to_numpy().astype(float),
        groups=df["group"].to_list(),
        seed=seed,
        ids=df["record_id"].to_list(),
    )
