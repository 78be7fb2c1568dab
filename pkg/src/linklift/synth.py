"""Synthetic populations with ground-truth duplicate pairs and signup labels.

Names come from the bundled frequency tables so phonetic collisions look
like real data. Signup labels are drawn from a logistic model over a few
signal features, with the intercept calibrated so the realized base rate
matches the configured one. All randomness flows from one seeded
generator in a fixed draw order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .matching import load_nickname_groups
from .phonetics import bundled_forename_table, bundled_surname_table
from .records import PersonRecord, RecordSet

# -- fixed geography ---------------------------------------------------------

_CITY_PREFIXES = [
    "OAK", "RIVER", "LAKE", "CEDAR", "MAPLE", "FAIR", "SPRING", "GREEN",
    "WEST", "NORTH", "EAST", "SOUTH", "PLEASANT", "UNION", "CLAY", "MADISON",
    "FRANKLIN", "CLINTON", "MILL", "HILL",
]
_CITY_SUFFIXES = ["TON", "VILLE", "FIELD", "WOOD", "DALE", "PORT", "BURG",
                  "FORD", "HAVEN", "VIEW"]

# state -> (number of cities, zip3 base); IL-heavy on purpose
_STATE_PLAN = [("IL", 90, 600), ("IN", 30, 460), ("WI", 24, 530),
               ("IA", 20, 500), ("MO", 20, 630), ("MI", 16, 480)]

STREET_NAMES = [
    "MAIN", "OAK", "MAPLE", "CEDAR", "PINE", "ELM", "WALNUT", "CHERRY",
    "WILLOW", "BIRCH", "SPRUCE", "CHESTNUT", "SYCAMORE", "MAGNOLIA",
    "JUNIPER", "HAWTHORN", "LAUREL", "POPLAR", "HICKORY", "ASPEN",
    "WASHINGTON", "ADAMS", "JEFFERSON", "MADISON", "MONROE", "JACKSON",
    "LINCOLN", "GRANT", "HARRISON", "CLEVELAND", "ROOSEVELT", "WILSON",
    "PARK", "LAKE", "RIVER", "HILL", "VALLEY", "MEADOW", "FOREST", "GARDEN",
    "ORCHARD", "SUNSET", "SUNRISE", "HIGHLAND", "PROSPECT", "UNION",
    "LIBERTY", "FRANKLIN", "CENTER", "CHURCH", "SCHOOL", "MILL", "BRIDGE",
    "SPRING", "COLLEGE", "COMMERCE", "MARKET", "WATER", "FIRST", "SECOND",
    "THIRD", "FOURTH", "FIFTH", "SIXTH", "SEVENTH", "EIGHTH", "NINTH",
    "TENTH", "DOGWOOD", "REDWOOD", "CYPRESS", "PALMETTO",
]
STREET_SUFFIXES = ["ST", "STREET", "AVE", "AVENUE", "RD", "ROAD", "DR",
                   "DRIVE", "LN", "LANE", "CT", "COURT", "BLVD", "PL", "TER"]
_EMAIL_DOMAINS = ["example.com", "example.net", "example.org", "mail.example"]
_SUFFIXES = ["JR", "SR", "II", "III"]


def city_table() -> list:
    """(city, state, zip3) triples; earlier cities get larger populations."""
    names = [p + s for p in _CITY_PREFIXES for s in _CITY_SUFFIXES]
    out = []
    i = 0
    for state, count, zip_base in _STATE_PLAN:
        for j in range(count):
            out.append((names[i], state, f"{zip_base + (j % 30):03d}"))
            i += 1
    return out


_CITIES = city_table()
_CITY_WEIGHTS = np.array([1.0 / (i + 5) for i in range(len(_CITIES))])
_CITY_WEIGHTS /= _CITY_WEIGHTS.sum()

DEFAULT_SIGNAL = {
    "parent_prob": 2.2, "income": 1.8, "homeowner_prob": 1.5,
    "tract_income": 1.2, "tract_education": 0.9, "age_45_59": 0.7,
}
DEFAULT_GROUP_SHARES = {"A": 0.61, "B": 0.17, "C": 0.14, "D": 0.06, "E": 0.02}


@dataclass
class SynthConfig:
    size: int = 100_000
    n_inputs: int = 10_000
    duplicate_rate: float = 0.3
    group_shares: dict = field(default_factory=lambda: dict(DEFAULT_GROUP_SHARES))
    n_features: int = 620
    signal_weights: dict = field(default_factory=lambda: dict(DEFAULT_SIGNAL))
    base_rate: float = 0.12
    typo_prob: float = 0.18
    nickname_prob: float = 0.15
    move_prob: float = 0.12
    blank_phone_prob: float = 0.2
    blank_email_prob: float = 0.25
    blank_dob_prob: float = 0.12
    phone_present: float = 0.75
    email_present: float = 0.65
    dob_present: float = 0.85
    seed: int = 42

    def validate(self) -> None:
        if self.size <= 0:
            raise DataError("size must be positive")
        if self.n_inputs < 0:
            raise DataError("n_inputs must be >= 0")
        probs = [self.duplicate_rate, self.typo_prob, self.nickname_prob,
                 self.move_prob, self.blank_phone_prob, self.blank_email_prob,
                 self.blank_dob_prob, self.phone_present, self.email_present,
                 self.dob_present]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise DataError("perturbation/presence probabilities must be in [0,1]")
        if not 0.0 < self.base_rate < 1.0:
            raise DataError(f"base rate {self.base_rate} must be inside (0,1)")
        if abs(sum(self.group_shares.values()) - 1.0) > 1e-9:
            raise DataError("group shares must sum to 1")
        if any(s < 0 for s in self.group_shares.values()):
            raise DataError("group shares must be non-negative")
        if self.n_features < len(self.signal_weights):
            raise DataError("n_features smaller than the signal feature count")


@dataclass
class TruthSet:
    pairs: dict = field(default_factory=dict)    # input_id -> reference_id
    signup: dict = field(default_factory=dict)   # reference_id -> 0/1


def _sample_names(rng, table, n):
    names = sorted(table.frequencies)
    probs = np.array([table.frequencies[k] for k in names])
    probs /= probs.sum()
    idx = rng.choice(len(names), size=n, p=probs)
    return np.array(names, dtype=object)[idx]


def _calibrate_intercept(signal, target_rate: float) -> float:
    lo, hi = -40.0, 40.0
    for _ in range(100):
        mid = (lo + hi) / 2.0
        rate = float(np.mean(1.0 / (1.0 + np.exp(-np.clip(mid + signal, -700, 700)))))
        if rate < target_rate:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def _feature_names(cfg: SynthConfig) -> list:
    names = list(cfg.signal_weights)
    width = len(str(cfg.n_features))
    names += [f"noise_{i:0{width}d}" for i in range(1, cfg.n_features - len(names) + 1)]
    return names


def generate_population(cfg: SynthConfig):
    """Reference records with features/groups plus a TruthSet carrying
    each record's true signup label. Deterministic given cfg.seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.size

    last = _sample_names(rng, bundled_surname_table(), n)
    first = _sample_names(rng, bundled_forename_table(), n)
    middle_mask = rng.random(n) < 0.5
    middle = _sample_names(rng, bundled_forename_table(), n)
    suffix_mask = rng.random(n) < 0.03
    suffix_idx = rng.integers(0, len(_SUFFIXES), n)

    city_idx = rng.choice(len(_CITIES), size=n, p=_CITY_WEIGHTS)
    street_no = rng.integers(1, 10000, n)
    street_idx = rng.integers(0, len(STREET_NAMES), n)
    street_sfx = rng.integers(0, len(STREET_SUFFIXES), n)
    unit_mask = rng.random(n) < 0.25
    unit_no = rng.integers(1, 500, n)
    zip2 = rng.integers(0, 100, n)

    phone_mask = rng.random(n) < cfg.phone_present
    phone_val = rng.integers(2_000_000_000, 10_000_000_000, n)
    email_mask = rng.random(n) < cfg.email_present
    email_num = rng.integers(1, 10000, n)
    email_dom = rng.integers(0, len(_EMAIL_DOMAINS), n)
    dob_mask = rng.random(n) < cfg.dob_present
    dob_y = rng.integers(1935, 2005, n)
    dob_m = rng.integers(1, 13, n)
    dob_d = rng.integers(1, 29, n)

    group_labels = sorted(cfg.group_shares)
    shares = np.array([cfg.group_shares[g] for g in group_labels])
    group_idx = rng.choice(len(group_labels), size=n, p=shares / shares.sum())

    features = np.round(rng.standard_normal((n, cfg.n_features)), 6)
    weights = np.array(list(cfg.signal_weights.values()))
    signal = features[:, : len(weights)] @ weights
    intercept = _calibrate_intercept(signal, cfg.base_rate)
    p_signup = 1.0 / (1.0 + np.exp(-np.clip(intercept + signal, -700, 700)))
    signup = (rng.random(n) < p_signup).astype(int)

    width = len(str(n))
    records = []
    truth = TruthSet()
    for i in range(n):
        rid = f"R{i + 1:0{width}d}"
        city, state, zip3 = _CITIES[city_idx[i]]
        records.append(PersonRecord(
            record_id=rid,
            first_name=str(first[i]),
            middle_name=str(middle[i]) if middle_mask[i] else "",
            last_name=str(last[i]),
            suffix=_SUFFIXES[suffix_idx[i]] if suffix_mask[i] else "",
            street_number=str(street_no[i]),
            street_name=f"{STREET_NAMES[street_idx[i]]} {STREET_SUFFIXES[street_sfx[i]]}",
            unit=f"APT {unit_no[i]}" if unit_mask[i] else "",
            city=city,
            state=state,
            zip=f"{zip3}{zip2[i]:02d}",
            phone=str(phone_val[i]) if phone_mask[i] else "",
            email=(f"{str(first[i]).lower()}.{str(last[i]).lower()}"
                   f"{email_num[i]}@{_EMAIL_DOMAINS[email_dom[i]]}"
                   if email_mask[i] else ""),
            dob=(f"{dob_y[i]:04d}-{dob_m[i]:02d}-{dob_d[i]:02d}"
                 if dob_mask[i] else ""),
            group=group_labels[group_idx[i]],
        ))
        truth.signup[rid] = int(signup[i])

    rs = RecordSet(records=records, feature_names=_feature_names(cfg),
                   features=features)
    return rs, truth


# -- perturbation ------------------------------------------------------------

def _typo(rng, s: str) -> str:
    """One character edit guaranteed to change the string."""
    if not s:
        return "X"
    pos = int(rng.integers(0, len(s)))
    op = int(rng.integers(0, 4))
    if op == 3 and len(s) >= 2:
        pos = min(pos, len(s) - 2)
        if s[pos] != s[pos + 1]:
            return s[:pos] + s[pos + 1] + s[pos] + s[pos + 2:]
        op = 0
    if op == 1 and len(s) > 1:
        return s[:pos] + s[pos + 1:]
    if op == 2:
        letter = chr(65 + int(rng.integers(0, 26)))
        return s[:pos] + letter + s[pos:]
    base = ord(s[pos]) - 65
    if not 0 <= base < 26:
        base = 0
    letter = chr(65 + (base + 1 + int(rng.integers(0, 25))) % 26)
    return s[:pos] + letter + s[pos + 1:]


def _nickname_aliases() -> dict:
    groups = load_nickname_groups()
    members = {}
    for name, gid in groups.items():
        members.setdefault(gid, []).append(name)
    out = {}
    for gid, names in members.items():
        names.sort()
        for name in names:
            others = [m for m in names if m != name]
            if others:
                out[name] = others
    return out


def _fresh_address(rng, cfg, state: str):
    """New address in the same state (a local move)."""
    in_state = [i for i, c in enumerate(_CITIES) if c[1] == state]
    weights = _CITY_WEIGHTS[in_state]
    idx = in_state[int(rng.choice(len(in_state), p=weights / weights.sum()))]
    city, st, zip3 = _CITIES[idx]
    return {
        "street_number": str(int(rng.integers(1, 10000))),
        "street_name": (f"{STREET_NAMES[int(rng.integers(0, len(STREET_NAMES)))]} "
                        f"{STREET_SUFFIXES[int(rng.integers(0, len(STREET_SUFFIXES)))]}"),
        "unit": f"APT {int(rng.integers(1, 500))}" if rng.random() < 0.25 else "",
        "city": city,
        "state": st,
        "zip": f"{zip3}{int(rng.integers(0, 100)):02d}",
    }


def perturb_duplicates(reference: RecordSet, truth: TruthSet, cfg: SynthConfig):
    """Build the input file: perturbed copies of sampled signup records plus
    fresh distractor records, shuffled. Records truth pairs as it goes."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed + 1)
    n_dup = int(round(cfg.n_inputs * cfg.duplicate_rate))
    signup_rows = [i for i, r in enumerate(reference.records)
                   if truth.signup.get(r.record_id) == 1]
    if n_dup > len(signup_rows):
        raise DataError(
            f"need {n_dup} duplicate sources but only {len(signup_rows)} signups")
    chosen = sorted(rng.choice(len(signup_rows), size=n_dup, replace=False))
    aliases = _nickname_aliases()

    dups = []
    for row in (signup_rows[i] for i in chosen):
        src = reference.records[row]
        f = {fld: getattr(src, fld) for fld in
             ("first_name", "middle_name", "last_name", "suffix",
              "street_number", "street_name", "unit", "city", "state",
              "zip", "phone", "email", "dob")}
        if f["first_name"] in aliases and rng.random() < cfg.nickname_prob:
            opts = aliases[f["first_name"]]
            f["first_name"] = opts[int(rng.integers(0, len(opts)))]
        if rng.random() < cfg.typo_prob:
            f["first_name"] = _typo(rng, f["first_name"])
        if rng.random() < cfg.typo_prob:
            f["last_name"] = _typo(rng, f["last_name"])
        if rng.random() < cfg.move_prob:
            f.update(_fresh_address(rng, cfg, f["state"]))
        elif rng.random() < cfg.typo_prob:
            f["street_name"] = _typo(rng, f["street_name"])
        if f["phone"] and rng.random() < cfg.blank_phone_prob:
            f["phone"] = ""
        if f["email"] and rng.random() < cfg.blank_email_prob:
            f["email"] = ""
        if f["dob"] and rng.random() < cfg.blank_dob_prob:
            f["dob"] = ""
        dups.append((src.record_id, f))

    n_distract = cfg.n_inputs - n_dup
    distractor_cfg = SynthConfig(
        size=max(n_distract, 1), n_features=1, signal_weights={"x": 1.0},
        base_rate=cfg.base_rate, group_shares=dict(cfg.group_shares),
        phone_present=cfg.phone_present, email_present=cfg.email_present,
        dob_present=cfg.dob_present, seed=cfg.seed + 2)
    distractors, _ = generate_population(distractor_cfg)
    fields = []
    for r in distractors.records[:n_distract]:
        fields.append((None, {fld: getattr(r, fld) for fld in
                              ("first_name", "middle_name", "last_name", "suffix",
                               "street_number", "street_name", "unit", "city",
                               "state", "zip", "phone", "email", "dob")}))
    rows = dups + fields
    order = rng.permutation(len(rows))

    width = len(str(max(len(rows), 1)))
    inputs = []
    for k, oi in enumerate(order):
        ref_id, f = rows[oi]
        iid = f"I{k + 1:0{width}d}"
        inputs.append(PersonRecord(record_id=iid, group="", **f))
        if ref_id is not None:
            truth.pairs[iid] = ref_id
    return RecordSet(records=inputs), truth


def generate_scenario(cfg: SynthConfig):
    """Reference file, input file, and TruthSet for one config."""
    reference, truth = generate_population(cfg)
    inputs, truth = perturb_duplicates(reference, truth, cfg)
    return reference, inputs, truth


# -- truth file i/o ----------------------------------------------------------

def write_truth_csv(truth: TruthSet, path) -> None:
    by_ref = {ref: inp for inp, ref in truth.pairs.items()}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "signup", "input_id"])
        for rid in sorted(truth.signup):
            w.writerow([rid, truth.signup[rid], by_ref.get(rid, "")])


def read_truth_csv(path) -> TruthSet:
    truth = TruthSet()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            truth.signup[row["record_id"]] = int(row["signup"])
            if row["input_id"]:
                truth.pairs[row["input_id"]] = row["record_id"]
    return truth
