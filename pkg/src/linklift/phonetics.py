"""Phonetic codes, string similarity, and name-commonness lookups.

Everything here is a pure function over immutable tables, so concurrent
use needs no locking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

_SOUNDEX_CODES = {
    "B": "1", "F": "1", "P": "1", "V": "1",
    "C": "2", "G": "2", "J": "2", "K": "2", "Q": "2", "S": "2", "X": "2", "Z": "2",
    "D": "3", "T": "3",
    "L": "4",
    "M": "5", "N": "5",
    "R": "6",
}

EMPTY_CODE = "0000"


def phonetic_code(name: str) -> str:
    """Classic 4-character Soundex code (letter + 3 digits) for an uppercased name.

    Adjacent letters with the same code collapse, H and W are transparent
    to that collapse, vowels break it. Empty or letterless input yields "0000".
    """
    letters = [c for c in name if "A" <= c <= "Z"]
    if not letters:
        return EMPTY_CODE
    first = letters[0]
    digits = []
    prev_code = _SOUNDEX_CODES.get(first, "")
    for c in letters[1:]:
        code = _SOUNDEX_CODES.get(c, "")
        if code and code != prev_code:
            digits.append(code)
            if len(digits) == 3:
                break
        if c not in "HW":
            prev_code = code
    return (first + "".join(digits)).ljust(4, "0")


def _jaro(a: str, b: str) -> float:
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return 0.0
    if a == b:
        return 1.0
    window = max(la, lb) // 2 - 1
    if window < 0:
        window = 0
    matched_b = [False] * lb
    a_matches = []
    for i, ca in enumerate(a):
        lo = max(0, i - window)
        hi = min(lb, i + window + 1)
        for j in range(lo, hi):
            if not matched_b[j] and b[j] == ca:
                matched_b[j] = True
                a_matches.append((i, j))
                break
    m = len(a_matches)
    if m == 0:
        return 0.0
    b_order = sorted(j for _, j in a_matches)
    transposed = sum(1 for (_, j), js in zip(a_matches, b_order) if j != js)
    t = transposed // 2
    return (m / la + m / lb + (m - t) / m) / 3.0


def string_similarity(a: str, b: str) -> float:
    """Jaro-Winkler similarity in [0,1] with prefix scale 0.1, max prefix 4."""
    j = _jaro(a, b)
    prefix = 0
    for ca, cb in zip(a, b):
        if ca != cb or prefix == 4:
            break
        prefix += 1
    return j + prefix * 0.1 * (1.0 - j)


@dataclass(frozen=True)
class NameFrequencyTable:
    """Relative name frequencies with a floor value for unseen names."""

    frequencies: dict
    floor: float

    def lookup(self, name: str) -> float:
        return self.frequencies.get(name, self.floor)


def name_commonness(name: str, table: NameFrequencyTable) -> float:
    """Relative frequency of a normalized name; the table floor when unseen."""
    return table.lookup(name)


def load_frequency_table(path) -> NameFrequencyTable:
    """Load a two-column ``name,relative_frequency`` CSV.

    The floor for unseen names is half the smallest listed frequency.
    """
    freqs = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip().lower() for h in header[:2]] != ["name", "relative_frequency"]:
            raise ValueError(f"unexpected frequency table header in {path}: {header}")
        for row in reader:
            if not row:
                continue
            f = float(row[1])
            if not 0.0 < f <= 1.0:
                raise ValueError(f"frequency out of (0,1] for {row[0]!r}: {f}")
            freqs[row[0]] = f
    if not freqs:
        raise ValueError(f"empty frequency table: {path}")
    return NameFrequencyTable(frequencies=freqs, floor=min(freqs.values()) / 2.0)


def _data_path(filename: str):
    return resources.files("linklift.data").joinpath(filename)


def bundled_surname_table() -> NameFrequencyTable:
    return load_frequency_table(_data_path("surnames.csv"))


def bundled_forename_table() -> NameFrequencyTable:
    return load_frequency_table(_data_path("forenames.csv"))
