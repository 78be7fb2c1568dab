"""Pairwise match-likelihood scoring and best-match selection.

A pair of normalized records is reduced to 16 agreement features in [0,1];
a logistic model turns them into a match likelihood. The best-scoring
blocking candidate is returned per input record.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

from .blocking import BlockingIndex, candidates
from .errors import DataError
from .phonetics import NameFrequencyTable, bundled_surname_table, phonetic_code, string_similarity
from .records import NormalizedRecord

PAIR_FEATURE_NAMES = (
    "first_name_sim", "last_name_sim", "phonetic_first_eq", "phonetic_last_eq",
    "nickname_hit", "house_number_eq", "street_sim", "zip5_eq", "zip3_eq",
    "city_state_eq", "phone_eq", "email_eq", "dob_eq", "dob_ym_eq",
    "name_rarity", "geo_proximity",
)


@dataclass(frozen=True)
class PairFeatureVector:
    """Agreement components in [0,1] plus parallel missingness flags.

    A component whose underlying field is empty on either side is 0 with
    its missing flag set.
    """

    values: tuple
    missing: tuple


def load_nickname_groups(path=None) -> dict:
    """name -> alias-group id. Groups sharing any member are merged, so
    BILL ~ WILLIAM ~ WILL all land in one group."""
    if path is None:
        path = resources.files("linklift.data").joinpath("nicknames.csv")
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                union(row[0].upper(), row[1].upper())
    return {name: find(name) for name in parent}


@dataclass(frozen=True)
class MatchTables:
    surnames: NameFrequencyTable
    nickname_groups: dict

    def nickname_hit(self, a: str, b: str) -> bool:
        if a == b:
            return True
        ga = self.nickname_groups.get(a)
        return ga is not None and ga == self.nickname_groups.get(b)


def default_tables() -> MatchTables:
    return MatchTables(surnames=bundled_surname_table(),
                       nickname_groups=load_nickname_groups())


def pair_features(a: NormalizedRecord, b: NormalizedRecord,
                  tables: MatchTables) -> PairFeatureVector:
    """Symmetric agreement features for a candidate pair."""
    values = []
    missing = []

    def put(present, value):
        if present:
            values.append(float(value))
            missing.append(0.0)
        else:
            values.append(0.0)
            missing.append(1.0)

    first = bool(a.first_name and b.first_name)
    last = bool(a.last_name and b.last_name)
    zips = bool(a.zip and b.zip)
    dobs = bool(a.dob and b.dob)

    put(first, string_similarity(a.first_name, b.first_name) if first else 0)
    put(last, string_similarity(a.last_name, b.last_name) if last else 0)
    put(first, first and phonetic_code(a.first_name) == phonetic_code(b.first_name))
    put(last, last and phonetic_code(a.last_name) == phonetic_code(b.last_name))
    put(first, first and tables.nickname_hit(a.first_name, b.first_name))
    put(bool(a.street_number and b.street_number), a.street_number == b.street_number)
    street = bool(a.street_name and b.street_name)
    put(street, string_similarity(a.street_name, b.street_name) if street else 0)
    put(zips, a.zip == b.zip)
    put(zips, a.zip[:3] == b.zip[:3])
    cs = bool(a.city and b.city and a.state and b.state)
    put(cs, cs and (a.city, a.state) == (b.city, b.state))
    put(bool(a.phone and b.phone), a.phone == b.phone)
    put(bool(a.email and b.email), a.email == b.email)
    put(dobs, a.dob == b.dob)
    put(dobs, dobs and a.dob[:7] == b.dob[:7])
    rarity = 1.0 - max(tables.surnames.lookup(a.last_name),
                       tables.surnames.lookup(b.last_name)) if last else 0
    put(last, rarity)
    put(zips, zips and a.zip[:3] == b.zip[:3])

    return PairFeatureVector(values=tuple(values), missing=tuple(missing))


@dataclass(frozen=True)
class PairwiseModel:
    weights: tuple
    intercept: float


# Hand-set default weights. Strong identifiers (phone/email/dob) and full
# address agreement carry the weight; the full name stack alone (~6.3 plus
# similarity noise) stays well under the intercept, so a name coincidence
# cannot cross 0.5 without at least one corroborating field.
DEFAULT_PAIR_MODEL = PairwiseModel(
    weights=(1.6, 2.0, 0.5, 0.6, 1.2, 1.6, 2.2, 2.2, 0.8, 1.0,
             4.8, 4.8, 4.2, 1.0, 0.4, 0.6),
    intercept=-12.0,
)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def score_pair(model: PairwiseModel, f: PairFeatureVector) -> float:
    """Logistic match likelihood in [0,1]."""
    if len(model.weights) != len(f.values):
        raise DataError(
            f"model has {len(model.weights)} weights for {len(f.values)} features")
    z = model.intercept
    for w, v in zip(model.weights, f.values):
        z += w * v
    return _sigmoid(z)


@dataclass(frozen=True)
class MatchResult:
    input_id: str
    matched_id: str | None
    likelihood: float
    accepted: bool
    n_candidates: int


@dataclass
class MatchReport:
    results: list
    n_inputs: int
    n_accepted: int

    @property
    def match_rate(self) -> float:
        return self.n_accepted / self.n_inputs if self.n_inputs else 0.0


def best_match(index: BlockingIndex, model: PairwiseModel, r: NormalizedRecord,
               ref_store: dict, tables: MatchTables,
               threshold: float = 0.5) -> MatchResult:
    """Score every blocking candidate and return the argmax.

    Candidates are visited in id order and only a strictly greater score
    displaces the current best, so ties resolve to the smaller matched_id.
    """
    cand = candidates(index, r)
    best_id = None
    best_score = 0.0
    for cid in sorted(cand):
        score = score_pair(model, pair_features(r, ref_store[cid], tables))
        if score > best_score:
            best_id, best_score = cid, score
    return MatchResult(
        input_id=r.record_id,
        matched_id=best_id,
        likelihood=best_score,
        accepted=best_id is not None and best_score >= threshold,
        n_candidates=len(cand),
    )


def match_file(index: BlockingIndex, model: PairwiseModel, inputs,
               ref_store: dict, tables: MatchTables,
               threshold: float = 0.5) -> MatchReport:
    """One MatchResult per input record, input order preserved."""
    results = [best_match(index, model, r, ref_store, tables, threshold)
               for r in inputs]
    return MatchReport(results=results, n_inputs=len(results),
                       n_accepted=sum(1 for m in results if m.accepted))


def write_match_csv(report: MatchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input_id", "matched_id", "likelihood", "accepted", "n_candidates"])
        for m in report.results:
            w.writerow([m.input_id, m.matched_id or "", repr(m.likelihood),
                        int(m.accepted), m.n_candidates])


def read_match_csv(path) -> MatchReport:
    results = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            results.append(MatchResult(
                input_id=row["input_id"],
                matched_id=row["matched_id"] or None,
                likelihood=float(row["likelihood"]),
                accepted=row["accepted"] == "1",
                n_candidates=int(row["n_candidates"]),
            ))
    return MatchReport(results=results, n_inputs=len(results),
                       n_accepted=sum(1 for m in results if m.accepted))


def fit_pair_model(feature_rows, labels, tolerance: float = 1e-9,
                   max_iters: int = 200) -> PairwiseModel:
    """Supervised alternative to the hand-set default: unpenalized logistic
    fit on labeled pairs via the lookalike trainer with lambda = 0."""
    import numpy as np

    from .lookalike import TrainingSet, train_l1_logistic, TrainConfig

    x = np.asarray([f.values for f in feature_rows], dtype=float)
    y = np.asarray(labels, dtype=float)
    ts = TrainingSet(feature_names=list(PAIR_FEATURE_NAMES), features=x,
                     labels=y, groups=[""] * len(y), seed=0)
    model = train_l1_logistic(ts, 0.0,
                              TrainConfig(tolerance=tolerance, max_iters=max_iters,
                                          standardize=False))
    weights = tuple(float(model.coefficient(n)) for n in PAIR_FEATURE_NAMES)
    return PairwiseModel(weights=weights, intercept=float(model.intercept))
