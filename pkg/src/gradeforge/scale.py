"""Concept grades and their numeric interpretation.

A concept is a letter grade (A, B, C, D, E, F, O) with an optional "+" or
"-" modifier.  Scores live on the 0..4 scale and are kept as exact
rationals (`fractions.Fraction`) internally; rounding happens only when a
value is rendered for people, always half-up to two decimals.

The two directions of conversion are:

* concept -> score, through a :class:`ModifierScheme` (a named value table);
* score -> concept, through a :class:`CutoffTable` of left-closed intervals.

A :class:`ConceptScale` bundles one scheme with one cutoff table and can be
serialized to JSON, which is the form used in workspace config files and by
the calibration service.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

from .errors import GradeforgeError

# Letters in ascending order of standing.  E, F and O all score zero, but
# the total order keeps them distinct so sorting is stable and predictable.
_LETTER_RANK = {"O": 0, "F": 1, "E": 2, "D": 3, "C": 4, "B": 5, "A": 6}
_MODIFIER_RANK = {"-": 0, "": 1, "+": 2}

#: Letters that never carry a +/- modifier.
UNMODIFIED_LETTERS = frozenset({"E", "F", "O"})

Score = Fraction


class UnknownConcept(GradeforgeError):
    """Raised for letters outside A..F/O or a modifier where none is allowed."""


class InvalidScore(GradeforgeError):
    """Raised when a score falls outside the closed interval [0, 4]."""


def as_fraction(value) -> Fraction:
    """Convert a number to an exact Fraction.

    Floats are interpreted through their shortest decimal representation,
    so ``as_fraction(0.1) == Fraction(1, 10)``.  This is what makes values
    typed into JSON documents round-trip exactly.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def clamp_score(value: Fraction) -> Fraction:
    """Clamp a rational onto the 0..4 scale."""
    return min(max(value, Fraction(0)), Fraction(4))


def check_score(value: Fraction) -> Fraction:
    if not Fraction(0) <= value <= Fraction(4):
        raise InvalidScore(f"score {value} outside [0, 4]")
    return value


def render_score(value: Fraction, places: int = 2) -> str:
    """Render a score as a decimal string, rounding half-up.

    Half-up is deliberate: 1.065 renders as "1.07" and 1.125 as "1.13",
    matching how the composition spreadsheets display values.  Built-in
    float rounding (half-even, on inexact binary values) would not.
    """
    scaled = value * 10**places
    units = (scaled + Fraction(1, 2)).__floor__()
    sign = "-" if units < 0 else ""
    units = abs(units)
    whole, frac = divmod(units, 10**places)
    if places == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:0{places}d}"


def _json_number(value: Fraction):
    """Fraction -> JSON-friendly number (int when integral)."""
    if value.denominator == 1:
        return int(value)
    return float(value)


@dataclass(frozen=True, order=False)
class Concept:
    """A letter grade with an optional modifier.

    Concepts are totally ordered: first by letter (A > B > C > D > E > F > O),
    then by modifier ("+" > plain > "-").
    """

    letter: str
    modifier: str = ""

    def __post_init__(self):
        if self.letter not in _LETTER_RANK:
            raise UnknownConcept(f"unknown concept letter {self.letter!r}")
        if self.modifier not in _MODIFIER_RANK:
            raise UnknownConcept(f"unknown modifier {self.modifier!r}")
        if self.modifier and self.letter in UNMODIFIED_LETTERS:
            raise UnknownConcept(
                f"concept {self.letter} does not take a modifier"
            )

    @classmethod
    def parse(cls, text: str) -> "Concept":
        text = text.strip()
        if not text:
            raise UnknownConcept("empty concept")
        letter, modifier = text[0], text[1:]
        return cls(letter, modifier)

    def sort_key(self) -> tuple[int, int]:
        return (_LETTER_RANK[self.letter], _MODIFIER_RANK[self.modifier])

    def __str__(self) -> str:
        return self.letter + self.modifier

    def __lt__(self, other: "Concept") -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: "Concept") -> bool:
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other: "Concept") -> bool:
        return self.sort_key() > other.sort_key()

    def __ge__(self, other: "Concept") -> bool:
        return self.sort_key() >= other.sort_key()


def all_concepts() -> list[Concept]:
    """Every valid concept, ascending."""
    out = []
    for letter in sorted(_LETTER_RANK, key=_LETTER_RANK.get):
        if letter in UNMODIFIED_LETTERS:
            out.append(Concept(letter))
        else:
            out.extend(Concept(letter, m) for m in ("-", "", "+"))
    return out


def registration_concept(concept: Concept) -> Concept:
    """Strip the modifier: what goes on the student's transcript.

    B- and B+ both register as B.  Idempotent by construction.
    """
    return Concept(concept.letter)


# ModifierScheme
# --------------
#
# Two published value tables exist side by side and disagree on what a
# modifier is worth, so the scheme is explicit configuration, never a
# hardcoded default hidden in an operation.

_BASE_VALUES = {
    "A": Fraction(4),
    "B": Fraction(3),
    "C": Fraction(2),
    "D": Fraction(1),
    "E": Fraction(0),
    "F": Fraction(0),
    "O": Fraction(0),
}

# Irregular per-concept steps, taken from the published table.
_TABLE2_VALUES = {
    "A+": Fraction(4),
    "A": Fraction(4),
    "A-": Fraction("3.8"),
    "B+": Fraction("3.5"),
    "B": Fraction(3),
    "B-": Fraction("2.8"),
    "C+": Fraction("2.5"),
    "C": Fraction(2),
    "C-": Fraction("1.8"),
    "D+": Fraction("1.5"),
    "D": Fraction(1),
    "D-": Fraction("0.5"),
    "E": Fraction(0),
    "F": Fraction(0),
    "O": Fraction(0),
}


@dataclass(frozen=True)
class ModifierScheme:
    """A named, total mapping from concepts to scores.

    The mapping must cover every concept and be monotone with respect to
    the concept order (a better concept never scores lower).
    """

    name: str
    values: dict  # str(concept) -> Fraction

    def __post_init__(self):
        previous = None
        for concept in all_concepts():
            key = str(concept)
            if key not in self.values:
                raise GradeforgeError(f"scheme {self.name}: missing value for {key}")
            value = self.values[key]
            if not Fraction(0) <= value <= Fraction(4):
                raise GradeforgeError(f"scheme {self.name}: {key} -> {value} outside [0, 4]")
            if previous is not None and value < previous:
                raise GradeforgeError(
                    f"scheme {self.name}: value for {key} breaks monotonicity"
                )
            previous = value

    def score(self, concept: Concept) -> Score:
        return self.values[str(concept)]


def _delta02_values() -> dict:
    values = {}
    for concept in all_concepts():
        base = _BASE_VALUES[concept.letter]
        delta = {"+": Fraction("0.2"), "": Fraction(0), "-": Fraction("-0.2")}[concept.modifier]
        values[str(concept)] = clamp_score(base + delta)
    return values


#: Published irregular table: A-=3.8 but B+=3.5, D-=0.5.
TABLE2 = ModifierScheme("table2", dict(_TABLE2_VALUES))

#: Uniform scheme: modifiers are worth exactly 0.2, clamped to [0, 4].
DELTA02 = ModifierScheme("delta02", _delta02_values())

SCHEMES = {s.name: s for s in (TABLE2, DELTA02)}


def concept_to_score(concept: Concept, scheme: ModifierScheme) -> Score:
    """Score of a concept under a scheme.  Total for all valid concepts."""
    return scheme.score(concept)


# CutoffTable
# -----------

@dataclass(frozen=True)
class CutoffEntry:
    min: Fraction
    concept: Concept
    percent: Fraction | None = None  # informative annotation, unused by lookup


@dataclass(frozen=True)
class CutoffTable:
    """Ordered left-closed intervals mapping scores to concepts.

    Entry i covers [min_i, min_{i+1}); the last interval is closed at 4.
    The first threshold must be 0 so the table covers the whole scale, and
    the concept sequence must be non-decreasing.
    """

    entries: tuple

    def __post_init__(self):
        if not self.entries:
            raise GradeforgeError("cutoff table has no entries")
        if self.entries[0].min != 0:
            raise GradeforgeError("cutoff table must start at 0")
        for earlier, later in zip(self.entries, self.entries[1:]):
            if later.min <= earlier.min:
                raise GradeforgeError(
                    f"cutoff thresholds must increase: {earlier.min} then {later.min}"
                )
            if later.concept < earlier.concept:
                raise GradeforgeError(
                    f"cutoff concepts must not decrease: "
                    f"{earlier.concept} then {later.concept}"
                )
        if self.entries[-1].min > 4:
            raise GradeforgeError("cutoff threshold above 4")

    @classmethod
    def build(cls, rows) -> "CutoffTable":
        """Build from (min, concept[, percent]) rows; accepts strs and numbers."""
        entries = []
        for row in rows:
            minimum, concept = row[0], row[1]
            percent = row[2] if len(row) > 2 else None
            if not isinstance(concept, Concept):
                concept = Concept.parse(concept)
            entries.append(
                CutoffEntry(
                    min=as_fraction(minimum),
                    concept=concept,
                    percent=None if percent is None else as_fraction(percent),
                )
            )
        return cls(tuple(entries))

    def lookup(self, score: Score) -> Concept:
        check_score(score)
        thresholds = [entry.min for entry in self.entries]
        index = bisect_right(thresholds, score) - 1
        return self.entries[index].concept

    def boundaries(self) -> list[Fraction]:
        return [entry.min for entry in self.entries]

    def to_rows(self) -> list[dict]:
        return [
            {
                "min": _json_number(entry.min),
                "concept": str(entry.concept),
                "percent": None if entry.percent is None else _json_number(entry.percent),
            }
            for entry in self.entries
        ]


def score_to_concept(score: Score, table: CutoffTable) -> Concept:
    """Concept for a score under a cutoff table.

    Intervals are left-closed: a score exactly on a threshold takes the
    interval that starts there.  Scores outside [0, 4] raise InvalidScore.
    """
    return table.lookup(score)


# Default cutoff table.  The percent column mirrors the published exam-mark
# annotation; it is carried along but never consulted by lookup.
DEFAULT_CUTOFFS = CutoffTable.build(
    [
        ("0", "F", "0"),
        ("0.8", "D-", "0.4"),
        ("1", "D", "0.42"),
        ("1.5", "D+", "0.45"),
        ("1.8", "C-", "0.48"),
        ("2", "C", "0.5"),
        ("2.5", "C+", "0.6"),
        ("2.8", "B-", "0.65"),
        ("3", "B", "0.7"),
        ("3.4", "B+", "0.75"),
        ("3.75", "A-", "0.8"),
        ("3.9", "A", "0.85"),
    ]
)


def concept_aligned_cutoffs(scheme: ModifierScheme) -> CutoffTable:
    """Cutoff table whose intervals start exactly at the scheme's values.

    Under such a table a score that is exactly a concept's value maps back
    to that concept, which is how single-grade assessments keep their
    recorded concept through score space.  E and O are not produced by
    cutoff lookup, and ties (A+ with A, E/F at 0) resolve to the plain
    letter.
    """
    by_score: dict = {}
    for concept in all_concepts():
        if concept.letter in ("E", "O"):
            continue
        value = scheme.score(concept)
        current = by_score.get(value)
        if current is None or (current.modifier and not concept.modifier):
            by_score[value] = concept
    rows = sorted(by_score.items())
    return CutoffTable(
        tuple(CutoffEntry(min=value, concept=concept) for value, concept in rows)
    )


# ConceptScale
# ------------

@dataclass(frozen=True)
class ConceptScale:
    """A modifier scheme paired with the cutoff table used for final concepts."""

    scheme: ModifierScheme
    cutoffs: CutoffTable

    def to_dict(self) -> dict:
        return {"scheme": self.scheme.name, "cutoffs": self.cutoffs.to_rows()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ConceptScale":
        try:
            scheme = SCHEMES[data["scheme"]]
        except KeyError:
            raise GradeforgeError(f"unknown scheme {data.get('scheme')!r}") from None
        rows = [
            (row["min"], row["concept"], row.get("percent"))
            for row in data["cutoffs"]
        ]
        return cls(scheme=scheme, cutoffs=CutoffTable.build(rows))

    @classmethod
    def from_json(cls, text: str) -> "ConceptScale":
        return cls.from_dict(json.loads(text, parse_float=Fraction))


DEFAULT_SCALE = ConceptScale(scheme=TABLE2, cutoffs=DEFAULT_CUTOFFS)
