"""Shared fixtures: the composition-spreadsheet cohort and helper builders."""

from __future__ import annotations

import statistics

import pytest

from gradeforge.analytics import BUCKETS
from gradeforge.policy import (
    CoursePolicy,
    HISTORICAL_WEIGHTS,
    MISSED,
    QuestionGrade,
    StudentRecord,
)
from gradeforge.scale import (
    Concept,
    CutoffTable,
    DEFAULT_CUTOFFS,
    DEFAULT_SCALE,
    TABLE2,
    as_fraction,
    concept_aligned_cutoffs,
    registration_concept,
    score_to_concept,
)


def single_grade_record(student_id, grades, done=26, total=36, rec=None, **kwargs):
    """Record whose assessments each carry exactly one recorded concept.

    ``grades`` maps assessment name to a concept string, or "-" for missed.
    """
    assessments = {}
    for name, text in grades.items():
        if text is None:
            continue
        if text == "-":
            assessments[name] = MISSED
        else:
            assessments[name] = (QuestionGrade(Concept.parse(text)),)
    if rec is not None:
        assessments["REC"] = (QuestionGrade(Concept.parse(rec)),)
    return StudentRecord(
        student_id=student_id,
        assessments=assessments,
        activities_done=done,
        activities_total=total,
        **kwargs,
    )


def aligned_overrides():
    """Per-assessment cutoffs that keep a recorded concept through score space."""
    aligned = concept_aligned_cutoffs(TABLE2)
    return {
        name: aligned
        for name in ("Exam1", "Activities", "Project", "Exam2", "SUB", "REC")
    }


# One historical class, graded on the 30/15/15/40 split, where every student
# fell below the participation minimum.  Row order: Exam1, Activities,
# Project, Exam2, recovery grade ("-" marks a missed assessment, None no
# recovery sat).  Expected CRs, two decimals: 0.70 0.80 0.83 0.87 0.98 0.98
# 1.07 1.07 1.13 1.17.
SPREADSHEET_ROWS = [
    ("student0", "D", "F", "F", "D", None),
    ("student1", "D", "B-", "D-", "-", "F"),
    ("student2", "D", "B", "D-", "F", "F"),
    ("student3", "D", "B-", "D", "-", "F"),
    ("student4", "D", "B+", "D", "F", "F"),
    ("student5", "D", "B+", "D", "F", "F"),
    ("student6", "C-", "B+", "F", "F", "D"),
    ("student7", "C-", "B", "D-", "F", "D"),
    ("student8", "D+", "B+", "D", "F", "D"),
    ("student9", "D", "B-", "B", "F", "F"),
]

#: Final concepts the coordinators actually registered for those rows,
#: including the hand-tuned exception that motivates the fairness audit:
#: the lowest-CR student got D while better-scoring students got F.
SPREADSHEET_SUBJECTIVE_FINALS = ["D", "F", "F", "F", "F", "F", "F", "F", "F", "F"]


def spreadsheet_records():
    records = []
    for student_id, exam1, activities, project, exam2, rec in SPREADSHEET_ROWS:
        records.append(
            single_grade_record(
                student_id,
                {
                    "Exam1": exam1,
                    "Activities": activities,
                    "Project": project,
                    "Exam2": exam2,
                },
                rec=rec,
            )
        )
    return records


@pytest.fixture
def spreadsheet_policy():
    return CoursePolicy(
        scale=DEFAULT_SCALE,
        weights=dict(HISTORICAL_WEIGHTS),
        cutoff_overrides=aligned_overrides(),
    )


@pytest.fixture
def spreadsheet_cohort(spreadsheet_policy):
    return spreadsheet_records(), spreadsheet_policy


# Synthetic-cohort machinery for the dispersion-shrinkage property: classes
# drawn from one ability distribution, graded either with the shared default
# cutoffs or with per-class tables shifted by a random severity (tapered at
# the scale ends so thresholds stay ordered inside [0, 4]).

def perturbed_cutoffs(rng) -> CutoffTable:
    severity = rng.uniform(-0.8, 0.8)
    rows = []
    for i, entry in enumerate(DEFAULT_CUTOFFS.entries):
        if i == 0:
            rows.append((entry.min, entry.concept))
            continue
        t = float(entry.min)
        shifted = t + severity * t * (4 - t) / 4 + rng.uniform(-0.015, 0.015)
        rows.append((str(round(shifted, 3)), entry.concept))
    return CutoffTable.build(rows)


def bucket_fractions(scores, cutoffs) -> dict:
    counts = dict.fromkeys(BUCKETS, 0)
    for score in scores:
        concept = registration_concept(score_to_concept(score, cutoffs))
        counts["F+O" if concept.letter in "EFO" else concept.letter] += 1
    return {bucket: counts[bucket] / len(scores) for bucket in BUCKETS}


def shrinkage_trial(rng, classes=10, students=30):
    """One cohort; returns summed per-bucket stddev (shared, perturbed)."""
    cohort = [
        [as_fraction(round(min(4.0, max(0.0, rng.gauss(2.2, 1.0))), 3))
         for _ in range(students)]
        for _ in range(classes)
    ]
    shared = [bucket_fractions(scores, DEFAULT_CUTOFFS) for scores in cohort]
    perturbed = [bucket_fractions(scores, perturbed_cutoffs(rng))
                 for scores in cohort]

    def spread(distributions):
        return sum(
            statistics.stdev([d[bucket] for d in distributions])
            for bucket in BUCKETS
        )

    return spread(shared), spread(perturbed)
