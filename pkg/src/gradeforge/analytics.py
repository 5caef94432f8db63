"""Cohort statistics, dispersion measures, and fairness audits.

Everything here aggregates immutable outcome data; no function mutates
its input, so reports can be recomputed from snapshots at any time.
"""

from __future__ import annotations

import csv
import io
import statistics
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

from .errors import GradeforgeError
from .scale import TABLE2, Concept, Score, as_fraction, concept_to_score, render_score

#: Distribution buckets.  F, O, and the registrar's E all mean the course
#: was not passed, so they pool together, matching how results are
#: usually charted.
BUCKETS = ("A", "B", "C", "D", "F+O")

_POOLED = {"F": "F+O", "O": "F+O", "E": "F+O"}


class EmptyClass(GradeforgeError):
    """Statistics over zero students are undefined."""


def _bucket(concept: Concept) -> str:
    return _POOLED.get(concept.letter, concept.letter)


@dataclass(frozen=True)
class ClassStats:
    class_id: str
    term: str
    modality: str
    n_students: int
    concept_distribution: dict
    gpa_mean: Score
    failure_fraction: Fraction
    cancellation_fraction: Fraction


def class_distribution(outcomes, class_id: str = "", term: str = "",
                       modality: str = "bl",
                       cancellation_fraction=Fraction(0)) -> ClassStats:
    """Distribution of registered concepts for one class.

    Fractions are exact and sum to 1; gpa_mean uses the standard
    letter values (O counts as 0) over registered concepts.
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyClass("no outcomes to summarize")
    n = len(outcomes)
    counts = {bucket: 0 for bucket in BUCKETS}
    total = Fraction(0)
    for outcome in outcomes:
        counts[_bucket(outcome.registered)] += 1
        total += concept_to_score(outcome.registered, TABLE2)
    distribution = {bucket: Fraction(counts[bucket], n) for bucket in BUCKETS}
    return ClassStats(
        class_id=class_id,
        term=term,
        modality=modality,
        n_students=n,
        concept_distribution=distribution,
        gpa_mean=total / n,
        failure_fraction=distribution["F+O"],
        cancellation_fraction=as_fraction(cancellation_fraction),
    )


def _sample_stddev(values) -> float:
    values = [float(v) for v in values]
    if len(values) < 2:
        return 0.0
    return statistics.stdev(values)


def cohort_dispersion(classes) -> dict:
    """Per-bucket (mean fraction, sample stddev) across classes.

    The n-1 denominator treats the classes as a sample of grading
    behavior; a single class has zero dispersion by convention.
    """
    classes = list(classes)
    if not classes:
        raise EmptyClass("no classes to compare")
    result = {}
    for bucket in BUCKETS:
        fractions = [c.concept_distribution[bucket] for c in classes]
        mean = sum(fractions, Fraction(0)) / len(fractions)
        result[bucket] = (mean, _sample_stddev(fractions))
    return result


@dataclass(frozen=True)
class TermSeriesPoint:
    term: str
    min_gpa: Score
    max_gpa: Score
    mean: Score
    stddev: float
    flagged: bool  # spread of two full concepts or more within one term


def term_series(classes) -> list:
    """Per-term spread of class GPA means, ordered by term."""
    by_term: dict = {}
    for stats in classes:
        by_term.setdefault(stats.term, []).append(stats.gpa_mean)
    points = []
    for term in sorted(by_term):
        gpas = by_term[term]
        low, high = min(gpas), max(gpas)
        points.append(TermSeriesPoint(
            term=term,
            min_gpa=low,
            max_gpa=high,
            mean=sum(gpas, Fraction(0)) / len(gpas),
            stddev=_sample_stddev(gpas),
            flagged=(high - low) >= 2,
        ))
    return points


AGGREGATIONS = ("simple", "student_weighted")

#: Published grand rows average per class, which term-level rows cannot
#: reconstruct; reports say so instead of echoing numbers they cannot check.
GRAND_ROW_NOTE = (
    "grand rows in the source data average over individual classes; "
    "term-level rows cannot reproduce them, so the aggregates below are "
    "recomputed from the term rows under the stated aggregation"
)


def failure_report(term_rows, aggregation: str = "simple") -> dict:
    """Aggregate failure fractions per modality.

    `term_rows` holds (term, modality, failure_fraction, n_students,
    n_classes).  `simple` averages the term fractions; `student_weighted`
    weights each term by its student count.
    """
    if aggregation not in AGGREGATIONS:
        raise GradeforgeError(f"unknown aggregation {aggregation!r}")
    by_modality: dict = {}
    for term, modality, fraction, students, classes in term_rows:
        fraction = as_fraction(fraction)
        if not 0 <= fraction <= 1:
            raise GradeforgeError(f"failure fraction {fraction} outside [0,1]")
        by_modality.setdefault(modality, []).append(
            (term, fraction, int(students), int(classes)))
    modalities = {}
    for modality, rows in sorted(by_modality.items()):
        students = sum(r[2] for r in rows)
        classes = sum(r[3] for r in rows)
        if aggregation == "simple":
            value = sum((r[1] for r in rows), Fraction(0)) / len(rows)
        else:
            value = sum((r[1] * r[2] for r in rows), Fraction(0)) / students
        modalities[modality] = {
            "failure_fraction": value,
            "students": students,
            "classes": classes,
            "terms": len(rows),
        }
    return {
        "aggregation": aggregation,
        "modalities": modalities,
        "note": GRAND_ROW_NOTE,
    }


@dataclass(frozen=True)
class FairnessFinding:
    """A pair where more course work bought a worse outcome."""

    higher_id: str      # student with the higher CR
    lower_id: str       # student with the lower CR but better final score
    cr_gap: Score       # cr(higher) - cr(lower), positive
    final_gap: Score    # final(lower) - final(higher), positive
    explanation: str


def fairness_audit(outcomes) -> list:
    """Every ordered pair with strictly higher CR but strictly lower final.

    Scans in CR order keeping the already-seen final scores sorted, so the
    work is proportional to n log n plus the number of findings rather
    than always n^2.
    """
    rows = sorted(
        ((outcome.cr, outcome.final_score, outcome.student_id)
         for outcome in outcomes),
        key=lambda r: (r[0], r[2]),
    )
    findings = []
    finals: list = []    # sorted final scores of students with strictly lower cr
    entries: list = []   # aligned (final, cr, student_id)
    i = 0
    while i < len(rows):
        j = i
        while j < len(rows) and rows[j][0] == rows[i][0]:
            j += 1
        # Compare the equal-cr batch only against strictly lower CRs.
        for cr, final, student in rows[i:j]:
            for prior_final, prior_cr, prior_student in entries[bisect_right(finals, final):]:
                findings.append(FairnessFinding(
                    higher_id=student,
                    lower_id=prior_student,
                    cr_gap=cr - prior_cr,
                    final_gap=prior_final - final,
                    explanation=(
                        f"{student} has CR {render_score(cr)} against "
                        f"{render_score(prior_cr)} for {prior_student}, yet "
                        f"finishes at {render_score(final)} against "
                        f"{render_score(prior_final)}"
                    ),
                ))
        for cr, final, student in rows[i:j]:
            position = bisect_right(finals, final)
            finals.insert(position, final)
            entries.insert(position, (final, cr, student))
        i = j
    findings.sort(key=lambda f: (f.higher_id, f.lower_id))
    return findings


def fairness_csv(findings) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["higher_id", "lower_id", "cr_gap", "final_gap",
                     "explanation"])
    for finding in findings:
        writer.writerow([
            finding.higher_id,
            finding.lower_id,
            render_score(finding.cr_gap),
            render_score(finding.final_gap),
            finding.explanation,
        ])
    return buffer.getvalue()


def prior_failure_stats(survey_rows) -> dict:
    """Per-term fractions of students with earlier failures.

    Rows are (student_id, term, failures_class, failures_bl).  The
    combined fraction is counted per student, not added from the two
    marginal fractions, since students can appear in both.
    """
    by_term: dict = {}
    for student_id, term, failures_class, failures_bl in survey_rows:
        if failures_class < 0 or failures_bl < 0:
            raise GradeforgeError("failure counts cannot be negative")
        bucket = by_term.setdefault(
            term, {"students": 0, "class": 0, "bl": 0, "any": 0})
        bucket["students"] += 1
        bucket["class"] += 1 if failures_class >= 1 else 0
        bucket["bl"] += 1 if failures_bl >= 1 else 0
        bucket["any"] += 1 if failures_class + failures_bl >= 1 else 0
    result = {}
    for term in sorted(by_term):
        bucket = by_term[term]
        n = bucket["students"]
        result[term] = {
            "students": n,
            "class_fraction": Fraction(bucket["class"], n),
            "bl_fraction": Fraction(bucket["bl"], n),
            "any_fraction": Fraction(bucket["any"], n),
        }
    return result


def cancellation_stats(rosters) -> dict:
    """Enrollment shrink due to cancellations.

    Rows are (class_id, enrolled, cancelled).  The aggregate fraction is
    the mean of per-class fractions; mean sizes before and after give the
    relative reduction.
    """
    rosters = list(rosters)
    if not rosters:
        raise EmptyClass("no classes")
    per_class = []
    for class_id, enrolled, cancelled in rosters:
        enrolled, cancelled = int(enrolled), int(cancelled)
        if not 0 <= cancelled <= enrolled or enrolled == 0:
            raise GradeforgeError(
                f"class {class_id}: {cancelled} cancellations of {enrolled}")
        per_class.append((class_id, Fraction(cancelled, enrolled)))
    n = len(rosters)
    total_enrolled = sum(int(r[1]) for r in rosters)
    total_cancelled = sum(int(r[2]) for r in rosters)
    mean_enrolled = Fraction(total_enrolled, n)
    mean_remaining = Fraction(total_enrolled - total_cancelled, n)
    return {
        "classes": n,
        "students": total_enrolled,
        "per_class": per_class,
        "mean_class_fraction": sum((f for _, f in per_class),
                                   Fraction(0)) / n,
        "mean_enrolled": mean_enrolled,
        "mean_remaining": mean_remaining,
        "reduction": 1 - mean_remaining / mean_enrolled,
    }


# Flat CSV views for external plotting
# ------------------------------------

def dispersion_csv(dispersion: dict) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["bucket", "mean_fraction", "stddev"])
    for bucket in BUCKETS:
        mean, stddev = dispersion[bucket]
        writer.writerow([bucket, f"{float(mean):.4f}", f"{stddev:.4f}"])
    return buffer.getvalue()


def term_series_csv(points) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["term", "min_gpa", "max_gpa", "mean", "stddev",
                     "flagged"])
    for point in points:
        writer.writerow([
            point.term,
            render_score(point.min_gpa),
            render_score(point.max_gpa),
            render_score(point.mean),
            f"{point.stddev:.4f}",
            "yes" if point.flagged else "no",
        ])
    return buffer.getvalue()


def failure_report_csv(report: dict) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["modality", "aggregation", "failure_percent",
                     "students", "classes", "terms"])
    for modality, data in report["modalities"].items():
        writer.writerow([
            modality,
            report["aggregation"],
            f"{float(data['failure_fraction']) * 100:.2f}",
            data["students"],
            data["classes"],
            data["terms"],
        ])
    return buffer.getvalue()
