"""Person record ingestion, validation, and normalization.

Records are immutable after construction. Feature columns (``f_`` prefix)
are kept in one numpy matrix aligned with the record list instead of per
record, so a 100k x 620 file stays a single block of floats. CSV I/O goes
through polars: floats write as shortest round-trip representations and
parse back to the identical doubles.
"""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import polars as pl

from .errors import DataError, DuplicateIdError

IDENTITY_FIELDS = (
    "record_id", "first_name", "middle_name", "last_name", "suffix",
    "street_number", "street_name", "unit", "city", "state", "zip",
    "phone", "email", "dob", "group",
)

FEATURE_PREFIX = "f_"


@dataclass(frozen=True)
class PersonRecord:
    record_id: str
    first_name: str = ""
    middle_name: str = ""
    last_name: str = ""
    suffix: str = ""
    street_number: str = ""
    street_name: str = ""
    unit: str = ""
    city: str = ""
    state: str = ""
    zip: str = ""
    phone: str = ""
    email: str = ""
    dob: str = ""
    group: str = ""


class NormalizedRecord(PersonRecord):
    """A PersonRecord in canonical form (see normalize_record)."""


@dataclass(frozen=True)
class RowError:
    row: int            # 1-based data-row index
    record_id: str
    message: str


@dataclass
class RecordSet:
    """Parsed records plus their aligned feature matrix and parse errors."""

    records: list
    feature_names: list = field(default_factory=list)
    features: np.ndarray | None = None
    errors: list = field(default_factory=list)

    def __post_init__(self):
        self._row_index = None

    def __len__(self):
        return len(self.records)

    def row_of(self, record_id: str) -> int:
        if self._row_index is None:
            self._row_index = {r.record_id: i for i, r in enumerate(self.records)}
        return self._row_index[record_id]

    def ids(self) -> list:
        return [r.record_id for r in self.records]


# -- text normalization ------------------------------------------------------

# hyphen/slash become word breaks, all other punctuation is dropped
_PUNCT_TABLE = {ord(c): " " for c in "-/"}
_PUNCT_TABLE.update({ord(c): None for c in "!\"#$%&'()*+,.:;<=>?@[\\]^_`{|}~"})


def _clean_text(s: str) -> str:
    return " ".join(s.upper().translate(_PUNCT_TABLE).split())


def _digits_only(s: str) -> str:
    return "".join(c for c in s if c.isdigit())


def load_street_abbreviations(path=None) -> dict:
    """Token -> expansion map; bundled table unless a path is given."""
    if path is None:
        path = resources.files("linklift.data").joinpath("street_abbreviations.csv")
    table = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                table[row[0].upper()] = row[1].upper()
    return table


_STREET_ABBREVS = None


def _street_abbrevs() -> dict:
    global _STREET_ABBREVS
    if _STREET_ABBREVS is None:
        _STREET_ABBREVS = load_street_abbreviations()
    return _STREET_ABBREVS


def _expand_street(s: str, table: dict) -> str:
    return " ".join(table.get(tok, tok) for tok in s.split())


def normalize_record(r: PersonRecord, abbreviations: dict | None = None) -> NormalizedRecord:
    """Canonical form: names/addresses uppercased and punctuation-stripped,
    street abbreviations expanded, phone reduced to last 10 digits, email
    lowercased. Idempotent; never touches record_id or group.
    """
    table = abbreviations if abbreviations is not None else _street_abbrevs()
    zip_digits = _digits_only(r.zip)
    return NormalizedRecord(
        record_id=r.record_id,
        first_name=_clean_text(r.first_name),
        middle_name=_clean_text(r.middle_name),
        last_name=_clean_text(r.last_name),
        suffix=_clean_text(r.suffix),
        street_number=_clean_text(r.street_number),
        street_name=_expand_street(_clean_text(r.street_name), table),
        unit=_expand_street(_clean_text(r.unit), table),
        city=_clean_text(r.city),
        state="".join(c for c in r.state.upper() if c.isalpha()),
        zip=zip_digits[:5] if len(zip_digits) >= 5 else zip_digits,
        phone=_digits_only(r.phone)[-10:],
        email=r.email.strip().lower(),
        dob=r.dob.strip(),
        group=r.group,
    )


def normalize_records(rs: RecordSet) -> RecordSet:
    table = _street_abbrevs()
    normalized = [normalize_record(r, table) for r in rs.records]
    return RecordSet(records=normalized, feature_names=rs.feature_names,
                     features=rs.features, errors=rs.errors)


# -- parsing -----------------------------------------------------------------

def _valid_dob(s: str) -> bool:
    if len(s) != 10 or s[4] != "-" or s[7] != "-":
        return False
    try:
        datetime.date.fromisoformat(s)
    except ValueError:
        return False
    return True


def parse_record_file(path, schema: dict | None = None) -> RecordSet:
    """Parse a delimited record file into a RecordSet.

    ``schema`` maps canonical field names to source column names; canonical
    fields without a mapping fall back to a same-named column when present.
    Malformed rows land in ``RecordSet.errors`` instead of being dropped
    silently. A duplicate record_id is fatal.
    """
    schema = schema or {}
    for k in schema:
        if k not in IDENTITY_FIELDS:
            raise DataError(f"unknown canonical field in column mapping: {k!r}")
    try:
        header = pl.read_csv(path, n_rows=0).columns
    except FileNotFoundError:
        raise DataError(f"record file not found: {path}") from None
    except pl.exceptions.NoDataError:
        raise DataError(f"record file is empty (no header): {path}") from None

    col_for = {}
    for canon in IDENTITY_FIELDS:
        src = schema.get(canon, canon)
        if canon in schema and src not in header:
            raise DataError(f"mapped column {src!r} for field {canon!r} not in {path}")
        if src in header:
            col_for[canon] = src
    if "record_id" not in col_for:
        raise DataError(f"no record_id column in {path}")

    feature_cols = [c for c in header if c.startswith(FEATURE_PREFIX)]
    feature_names = [c[len(FEATURE_PREFIX):] for c in feature_cols]

    dtypes = {c: (pl.Float64 if c in feature_cols else pl.Utf8) for c in header}
    try:
        # ignore_errors turns unparseable feature cells into nulls, which the
        # row validation below reports instead of aborting the whole file
        df = pl.read_csv(path, schema_overrides=dtypes, ignore_errors=True,
                         missing_utf8_is_empty_string=True)
    except pl.exceptions.PolarsError as e:
        raise DataError(f"cannot parse {path}: {e}") from None
    n = len(df)

    bad = {}  # row index -> list of messages

    def flag(mask, message):
        for i in np.flatnonzero(mask):
            bad.setdefault(int(i), []).append(message)

    ids = df[col_for["record_id"]].str.strip_chars()
    id_list = ids.to_list()
    if n:
        flag((ids == "").to_numpy(), "missing record_id")
        nonempty = ids.filter(ids != "")
        if nonempty.is_duplicated().any():
            dup = nonempty.filter(nonempty.is_duplicated())[0]
            raise DuplicateIdError(f"duplicate record_id {dup!r} in {path}")

        if "zip" in col_for:
            zd = df[col_for["zip"]].str.replace_all(r"\D", "")
            lens = zd.str.len_chars()
            flag(((lens > 0) & (lens < 5)).to_numpy(), "zip has fewer than 5 digits")
        if "state" in col_for:
            sd = df[col_for["state"]].str.replace_all(r"[^A-Za-z]", "")
            lens = sd.str.len_chars()
            flag(((lens > 0) & (lens != 2)).to_numpy(), "state is not a 2-letter code")
        if "dob" in col_for:
            dobs = df[col_for["dob"]].str.strip_chars().to_list()
            bad_dob = np.fromiter(
                (s != "" and not _valid_dob(s) for s in dobs),
                dtype=bool, count=n)
            flag(bad_dob, "dob is not an ISO date")

    features = None
    if feature_cols:
        features = df.select(feature_cols).to_numpy()
        if features.dtype != np.float64:
            features = features.astype(np.float64)
        nonfinite = ~np.isfinite(features).all(axis=1)
        flag(nonfinite, "missing or non-numeric feature value")

    columns = {canon: df[src].to_list() for canon, src in col_for.items()}
    del df

    records = []
    keep_rows = []
    errors = []
    for i in range(n):
        if i in bad:
            errors.append(RowError(row=i + 1, record_id=id_list[i],
                                   message="; ".join(bad[i])))
            continue
        kwargs = {canon: vals[i] for canon, vals in columns.items()}
        kwargs["record_id"] = id_list[i]
        records.append(PersonRecord(**kwargs))
        keep_rows.append(i)

    if features is not None and len(keep_rows) != n:
        features = features[keep_rows]

    return RecordSet(records=records, feature_names=feature_names,
                     features=features, errors=errors)


def write_record_file(rs: RecordSet, path) -> None:
    """Write a RecordSet back to CSV in the canonical column layout.

    Floats round-trip exactly (shortest-repr formatting), so
    parse(write(parse(f))) == parse(f).
    """
    df = pl.DataFrame(
        {f: pl.Series(f, [getattr(r, f) for r in rs.records], dtype=pl.Utf8)
         for f in IDENTITY_FIELDS})
    if rs.feature_names:
        if rs.features is None or rs.features.shape != (len(rs.records), len(rs.feature_names)):
            raise DataError("feature matrix shape does not match records/feature_names")
        fdf = pl.from_numpy(rs.features,
                            schema=[FEATURE_PREFIX + n for n in rs.feature_names])
        df = pl.concat([df, fdf], how="horizontal")
    df.write_csv(path)


def write_error_report(errors, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "record_id", "message"])
        for e in errors:
            w.writerow([e.row, e.record_id, e.message])
