"""Per-group classifiers and group-proportional target selection.

One model is trained per group on that group's rows only, and the final
list draws each group's quota from its own ranking. Scores are never
compared across groups, which is what makes the selection immune to
between-group score skew.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .lookalike import (
    CVResult,
    SparseModel,
    TrainConfig,
    TrainingSet,
    cross_validate,
    default_lambda_grid,
    model_scores,
    regularization_path,
)


@dataclass
class GroupCVConfig:
    k: int = 4
    n_lambdas: int = 50
    lambda_min_ratio: float = 1e-4
    seed: int = 0
    min_positives: int = 500
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class GroupModel:
    group: str
    model: SparseModel
    cv: CVResult
    rows_used: list                 # ts row indices after within-group balancing
    n_positives: int                # group positives before balancing
    n_negatives: int
    small_sample: bool


@dataclass
class GroupModelSet:
    models: dict                    # group -> GroupModel
    errors: dict                    # group -> reason it was skipped

    def warnings(self) -> dict:
        return {g: f"only {m.n_positives} positives (< minimum)"
                for g, m in self.models.items() if m.small_sample}


def _group_seed(base_seed: int, group: str) -> list:
    digest = hashlib.sha256(group.encode("utf-8")).digest()
    return [base_seed, int.from_bytes(digest[:4], "big")]


def _balance_rows(rows, labels, rng) -> list:
    """Within-group 50/50 by downsampling the majority class."""
    pos = [r for r in rows if labels[r] == 1]
    neg = [r for r in rows if labels[r] != 1]
    if len(pos) > len(neg):
        keep = rng.choice(len(pos), size=len(neg), replace=False)
        pos = [pos[i] for i in sorted(keep)]
    elif len(neg) > len(pos):
        keep = rng.choice(len(neg), size=len(pos), replace=False)
        neg = [neg[i] for i in sorted(keep)]
    return sorted(pos + neg)


def train_group_models(ts: TrainingSet, config: GroupCVConfig | None = None) -> GroupModelSet:
    """Train one CV-selected sparse model per group present in the data.

    Groups with a single class are skipped with an error entry; groups
    whose positive count is below config.min_positives train anyway and
    carry a small-sample warning. Each group's randomness is seeded
    independently, so adding or editing one group never changes another's
    model.
    """
    config = config or GroupCVConfig()
    groups = sorted({g for g in ts.groups if g != ""})
    if not groups:
        raise DataError("training set has no group labels")

    models = {}
    errors = {}
    for g in groups:
        rows = [i for i, gg in enumerate(ts.groups) if gg == g]
        labels = ts.labels
        n_pos = sum(1 for i in rows if labels[i] == 1)
        n_neg = len(rows) - n_pos
        if n_pos == 0 or n_neg == 0:
            errors[g] = f"single-class group (positives={n_pos}, negatives={n_neg})"
            continue
        rng = np.random.default_rng(_group_seed(config.seed, g))
        used = _balance_rows(rows, labels, rng)
        sub = ts.subset(used)
        grid = default_lambda_grid(sub, config.n_lambdas, config.lambda_min_ratio)
        cv = cross_validate(sub, config.k, grid, config.seed, config.train)
        path = regularization_path(sub, grid, config.train)
        final = path[list(cv.lambda_grid).index(cv.lambda_star)]
        models[g] = GroupModel(
            group=g, model=final, cv=cv, rows_used=used,
            n_positives=n_pos, n_negatives=n_neg,
            small_sample=n_pos < config.min_positives,
        )
    return GroupModelSet(models=models, errors=errors)


def apportion(n: int, proportions: dict) -> dict:
    """Largest-remainder (Hamilton) quotas; always sums exactly to n."""
    if n < 0:
        raise DataError("target count must be >= 0")
    for g, p in proportions.items():
        if p < 0:
            raise DataError(f"negative proportion for group {g!r}")
    total = sum(proportions.values())
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"proportions sum to {total!r}, expected 1")

    quotas = {}
    remainders = []
    assigned = 0
    for g in sorted(proportions):
        exact = n * proportions[g]
        q = int(exact)
        quotas[g] = q
        assigned += q
        remainders.append((-(exact - q), g))
    remainders.sort()
    for _, g in remainders[: n - assigned]:
        quotas[g] += 1
    return quotas


@dataclass
class TargetList:
    entries: list                   # (record_id, group, score), final order
    quotas: dict                    # group -> apportioned quota
    counts: dict                    # group -> entries actually taken
    shortfalls: dict                # group -> unfilled part of its quota
    skipped_unlabeled: int
    skipped_unmodeled: dict         # group -> row count with no model


def proportional_pull(models: GroupModelSet, population, n: int,
                      proportions: dict) -> TargetList:
    """Fill each group's apportioned quota with that group's top-scored
    population rows (score desc, ties by record_id asc). The merged list
    interleaves groups by within-group rank fraction, so every prefix is
    approximately proportional too. A group smaller than its quota is
    truncated and the shortfall reported; nothing reallocates.
    """
    if population.features is None:
        raise DataError("population records carry no feature columns")
    quotas = apportion(n, proportions)

    group_rows = {}
    skipped_unlabeled = 0
    skipped_unmodeled = {}
    for i, r in enumerate(population.records):
        if not r.group:
            skipped_unlabeled += 1
        elif r.group not in models.models:
            skipped_unmodeled[r.group] = skipped_unmodeled.get(r.group, 0) + 1
        else:
            group_rows.setdefault(r.group, []).append(i)

    picked = []                     # (rank_fraction, group, record_id, score, rank)
    counts = {}
    shortfalls = {}
    for g in sorted(quotas):
        quota = quotas[g]
        rows = group_rows.get(g, [])
        if quota == 0:
            counts[g] = 0
            continue
        if g not in models.models:
            counts[g] = 0
            shortfalls[g] = quota
            continue
        scores = model_scores(models.models[g].model, population.features[rows])
        ranked = sorted(
            ((population.records[i].record_id, float(s)) for i, s in zip(rows, scores)),
            key=lambda t: (-t[1], t[0]),
        )
        take = ranked[:quota]
        counts[g] = len(take)
        if len(take) < quota:
            shortfalls[g] = quota - len(take)
        for rank, (rid, score) in enumerate(take, start=1):
            picked.append((rank / quota, g, rid, score, rank))

    picked.sort(key=lambda t: (t[0], t[1], t[4]))
    entries = [(rid, g, score) for _, g, rid, score, _ in picked]
    return TargetList(entries=entries, quotas=quotas, counts=counts,
                      shortfalls=shortfalls, skipped_unlabeled=skipped_unlabeled,
                      skipped_unmodeled=skipped_unmodeled)


def write_target_csv(targets: TargetList, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "record_id", "group", "score"])
        for rank, (rid, g, score) in enumerate(targets.entries, start=1):
            w.writerow([rank, rid, g, repr(score)])


def read_proportions_csv(path) -> dict:
    """Two-column ``group,proportion`` CSV."""
    import csv

    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["group", "proportion"]:
            raise DataError(f"expected header group,proportion in {path}")
        for row in reader:
            if not row:
                continue
            if row[0] in out:
                raise DataError(f"duplicate group {row[0]!r} in {path}")
            out[row[0]] = float(row[1])
    if not out:
        raise DataError(f"no proportions in {path}")
    return out
