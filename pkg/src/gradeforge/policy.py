"""Course policy and the per-student grade pipeline.

A :class:`CoursePolicy` captures every knob a course coordinator can turn:
assessment weights, per-assessment question weights, attendance rule,
language cap, substitute and recovery exam handling, bonuses, and cutoff
overrides.  :func:`compute_final_record` runs one student's record through
the pipeline in a fixed order:

    per-assessment aggregation -> language cap -> SUB resolution ->
    CR -> bonuses -> attendance override -> CbREC -> REC resolution ->
    final concept -> registration concept

Every step appends to the outcome's audit trail, and the trail alone is
enough to recompute the final score (see :func:`replay_audit`).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import GradeforgeError
from .scale import (
    Concept,
    ConceptScale,
    CutoffTable,
    DEFAULT_SCALE,
    Score,
    as_fraction,
    clamp_score,
    concept_to_score,
    registration_concept,
    render_score,
    score_to_concept,
)

# Canonical assessment names.  REC and SUB are graded like assessments but
# never carry composition weight.
ACTIVITIES = "Activities"
EXAM1 = "Exam1"
PROJECT = "Project"
EXAM2 = "Exam2"
SUB = "SUB"
REC = "REC"

#: Assessments a SUB (or REC acting as substitute) may stand in for.
SUBSTITUTABLE = (EXAM1, PROJECT, EXAM2)

#: Marker for an assessment the student did not sit.
MISSED = "missed"

REC_POLICIES = ("replace", "max_of", "mean_of", "open_rec_max")
REC_ELIGIBILITY = ("final_D_or_F", "everyone")
SUB_POLICIES = ("separate_sub_exam", "rec_substitutes")
BONUS_STAGES = ("pre_cutoff", "post_cutoff")

_WEIGHT_TOLERANCE = Fraction(1, 10**9)


class WeightSumError(GradeforgeError):
    """Weights that should sum to 1 do not."""


class EmptyInput(GradeforgeError):
    """An aggregation was asked for zero graded items."""


class IneligibleRec(GradeforgeError):
    """A recovery grade exists for a student the policy does not admit."""


class MultipleMissed(GradeforgeError):
    """More than one missed assessment; a substitute slot is ambiguous."""


@dataclass(frozen=True)
class QuestionGrade:
    concept: Concept
    errors: tuple = ()


@dataclass(frozen=True)
class StudentRecord:
    """One student's raw grades and attendance for a term.

    ``assessments`` maps assessment name to either a tuple of
    :class:`QuestionGrade` or the string ``"missed"``.  An absent key means
    the same as missed.
    """

    student_id: str
    assessments: dict
    activities_done: int = 0
    activities_total: int = 0
    uses_portugol_after_exam1: bool = False
    campus: str | None = None
    cancelled: bool = False
    prior_failures: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.activities_total < 0 or not 0 <= self.activities_done:
            raise GradeforgeError("activity counts must be non-negative")
        if self.activities_total and self.activities_done > self.activities_total:
            raise GradeforgeError(
                f"{self.student_id}: {self.activities_done} activities done "
                f"out of {self.activities_total}"
            )
        for name, result in self.assessments.items():
            if result == MISSED:
                continue
            if not result:
                raise GradeforgeError(f"{self.student_id}: {name} graded with no questions")

    def result(self, name: str):
        return self.assessments.get(name, MISSED)


def _check_weight_sum(weights, what: str) -> None:
    total = sum(weights, Fraction(0))
    if abs(total - 1) > _WEIGHT_TOLERANCE:
        raise WeightSumError(f"{what} sum to {total}, expected 1")


@dataclass(frozen=True)
class CoursePolicy:
    """Complete, serializable configuration of a course's grading rules."""

    scale: ConceptScale = DEFAULT_SCALE
    weights: dict = field(
        default_factory=lambda: {
            ACTIVITIES: Fraction(1, 10),
            EXAM1: Fraction(7, 20),
            PROJECT: Fraction(1, 10),
            EXAM2: Fraction(9, 20),
        }
    )
    question_weights: dict = field(default_factory=dict)
    attendance_min_fraction: Fraction = Fraction(3, 4)
    attendance_failure_concept: Concept = Concept("F")
    language_cap: Concept | None = Concept("B")
    rec_policy: str = "max_of"
    rec_eligibility: str = "final_D_or_F"
    sub_policy: str = "separate_sub_exam"
    improvement_bonus_factor: Fraction = Fraction(1, 10)
    activity_bonus_factor: Fraction = Fraction(1, 5)
    bonus_stage: str = "pre_cutoff"
    rec_after_attendance_failure: bool = True
    cutoff_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_weight_sum(self.weights.values(), "assessment weights")
        for name, qweights in self.question_weights.items():
            _check_weight_sum(qweights, f"question weights for {name}")
        if self.rec_policy not in REC_POLICIES:
            raise GradeforgeError(f"unknown rec_policy {self.rec_policy!r}")
        if self.rec_eligibility not in REC_ELIGIBILITY:
            raise GradeforgeError(f"unknown rec_eligibility {self.rec_eligibility!r}")
        if self.sub_policy not in SUB_POLICIES:
            raise GradeforgeError(f"unknown sub_policy {self.sub_policy!r}")
        if self.bonus_stage not in BONUS_STAGES:
            raise GradeforgeError(f"unknown bonus_stage {self.bonus_stage!r}")
        if str(self.attendance_failure_concept) not in ("F", "O"):
            raise GradeforgeError("attendance failure concept must be F or O")

    def cutoffs_for(self, assessment: str) -> CutoffTable:
        return self.cutoff_overrides.get(assessment, self.scale.cutoffs)

    def final_cutoffs(self) -> CutoffTable:
        return self.cutoff_overrides.get("final", self.scale.cutoffs)

    # serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        def number(value: Fraction):
            return int(value) if value.denominator == 1 else float(value)

        return {
            "scale": self.scale.to_dict(),
            "weights": {k: number(v) for k, v in self.weights.items()},
            "question_weights": {
                k: [number(w) for w in v] for k, v in self.question_weights.items()
            },
            "attendance_min_fraction": number(self.attendance_min_fraction),
            "attendance_failure_concept": str(self.attendance_failure_concept),
            "language_cap": None if self.language_cap is None else str(self.language_cap),
            "rec_policy": self.rec_policy,
            "rec_eligibility": self.rec_eligibility,
            "sub_policy": self.sub_policy,
            "improvement_bonus_factor": number(self.improvement_bonus_factor),
            "activity_bonus_factor": number(self.activity_bonus_factor),
            "bonus_stage": self.bonus_stage,
            "rec_after_attendance_failure": self.rec_after_attendance_failure,
            "cutoff_overrides": {
                name: table.to_rows() for name, table in self.cutoff_overrides.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CoursePolicy":
        kwargs = {}
        if "scale" in data:
            kwargs["scale"] = ConceptScale.from_dict(data["scale"])
        if "weights" in data:
            kwargs["weights"] = {
                k: as_fraction(v) for k, v in data["weights"].items()
            }
        if "question_weights" in data:
            kwargs["question_weights"] = {
                k: tuple(as_fraction(w) for w in v)
                for k, v in data["question_weights"].items()
            }
        for key in ("attendance_min_fraction", "improvement_bonus_factor",
                    "activity_bonus_factor"):
            if key in data:
                kwargs[key] = as_fraction(data[key])
        if "attendance_failure_concept" in data:
            kwargs["attendance_failure_concept"] = Concept.parse(
                data["attendance_failure_concept"]
            )
        if "language_cap" in data:
            cap = data["language_cap"]
            kwargs["language_cap"] = None if cap is None else Concept.parse(cap)
        for key in ("rec_policy", "rec_eligibility", "sub_policy", "bonus_stage",
                    "rec_after_attendance_failure"):
            if key in data:
                kwargs[key] = data[key]
        if "cutoff_overrides" in data:
            kwargs["cutoff_overrides"] = {
                name: CutoffTable.build(
                    [(row["min"], row["concept"], row.get("percent")) for row in rows]
                )
                for name, rows in data["cutoff_overrides"].items()
            }
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CoursePolicy":
        return cls.from_dict(json.loads(text, parse_float=Fraction))


#: Weight split used by the earlier term whose spreadsheet the fixtures mirror.
HISTORICAL_WEIGHTS = {
    EXAM1: Fraction(3, 10),
    ACTIVITIES: Fraction(3, 20),
    PROJECT: Fraction(3, 20),
    EXAM2: Fraction(2, 5),
}


@dataclass(frozen=True)
class GradeOutcome:
    """Everything the pipeline produced for one student."""

    student_id: str
    assessments: dict  # name -> {"score": Fraction, "concept": Concept} | None
    cr: Score
    cbrec: Concept
    rec: Concept | None
    bonuses: tuple  # ((name, Fraction), ...)
    final_score: Score
    final_concept: Concept
    registered: Concept
    audit_trail: tuple


# Single operations
# -----------------

def aggregate_weighted(graded, scale: ConceptScale) -> Score:
    """Weighted score of (concept, weight) pairs under the scale's scheme.

    Weights must sum to 1 within 1e-9.  The result is clamped onto [0, 4],
    although with valid weights it cannot leave the scale.
    """
    items = list(graded)
    if not items:
        raise EmptyInput("nothing to aggregate")
    _check_weight_sum((as_fraction(w) for _, w in items), "aggregation weights")
    total = sum(
        (concept_to_score(c, scale.scheme) * as_fraction(w) for c, w in items),
        Fraction(0),
    )
    return clamp_score(total)


def attendance_fraction(record: StudentRecord) -> Fraction | None:
    if record.activities_total == 0:
        return None
    return Fraction(record.activities_done, record.activities_total)


def apply_attendance_rule(record: StudentRecord, policy: CoursePolicy) -> Concept | None:
    """Forced concept when participation fell below the minimum, else None.

    The boundary is inclusive: delivering exactly the minimum fraction
    (say 27 of 36) passes; 26 of 36 does not.
    """
    fraction = attendance_fraction(record)
    if fraction is None:
        return None
    if fraction < policy.attendance_min_fraction:
        return policy.attendance_failure_concept
    return None


def apply_language_cap(concept: Concept, record: StudentRecord,
                       policy: CoursePolicy) -> Concept:
    """Cap a post-first-exam assessment concept for beginner-language use."""
    if policy.language_cap is None or not record.uses_portugol_after_exam1:
        return concept
    if concept > policy.language_cap:
        return policy.language_cap
    return concept


#: Assessments the language cap applies to.  The first exam is excluded
#: because the beginner language is mandatory up to that point; activities
#: straddle both halves of the term and are left alone as well.
_CAP_EXEMPT = (EXAM1, ACTIVITIES)


def resolve_sub(record: StudentRecord, policy: CoursePolicy) -> tuple[StudentRecord, str | None]:
    """Fill at most one missed core assessment from the substitute source.

    Under ``separate_sub_exam`` the SUB grade fills the slot; under
    ``rec_substitutes`` the REC grade does.  With no substitute grade the
    record is returned unchanged.  A substitute grade with more than one
    missed slot is ambiguous and raises :class:`MultipleMissed`.
    """
    source = SUB if policy.sub_policy == "separate_sub_exam" else REC
    substitute = record.result(source)
    if substitute == MISSED:
        return record, None
    missed = [name for name in SUBSTITUTABLE if record.result(name) == MISSED]
    if not missed:
        return record, None
    if len(missed) > 1:
        raise MultipleMissed(
            f"{record.student_id}: {source} cannot stand in for "
            f"{len(missed)} missed assessments ({', '.join(missed)})"
        )
    assessments = dict(record.assessments)
    assessments[missed[0]] = substitute
    return replace(record, assessments=assessments), missed[0]


def apply_bonuses(cr: Score, exam1: Concept | None, exam2: Concept | None,
                  activities: tuple, policy: CoursePolicy) -> tuple[Score, tuple]:
    """CR plus the two incentive bonuses, clamped onto the scale.

    * improvement: factor times the score gain from the first exam to the
      second (never negative);
    * activity: factor scaled by the mean delivered-activity concept
      (normalized to 0..1) and by the completion ratio.

    Both bonuses are recorded even when zero.  ``activities`` is
    ``(done, total, mean_concept_or_None)``.
    """
    scheme = policy.scale.scheme
    score1 = Fraction(0) if exam1 is None else concept_to_score(exam1, scheme)
    score2 = Fraction(0) if exam2 is None else concept_to_score(exam2, scheme)
    improvement = policy.improvement_bonus_factor * max(Fraction(0), score2 - score1)

    done, total, mean_concept = activities
    if total and mean_concept is not None:
        quality = concept_to_score(mean_concept, scheme) / Fraction(4)
        completion = Fraction(done, total)
        activity = policy.activity_bonus_factor * quality * completion
    else:
        activity = Fraction(0)

    bonuses = (("improvement", improvement), ("activity", activity))
    return clamp_score(cr + improvement + activity), bonuses


def _rec_eligible(cbrec: Concept, policy: CoursePolicy,
                  attendance_forced: bool) -> bool:
    if policy.rec_policy == "open_rec_max":
        return True
    if attendance_forced and not policy.rec_after_attendance_failure:
        return False
    if policy.rec_eligibility == "everyone":
        return True
    return cbrec.letter in ("D", "F")


def resolve_rec(cbrec: Concept, rec_concept: Concept | None, pre_rec_score: Score,
                policy: CoursePolicy, attendance_forced: bool = False) -> tuple[Score, Concept]:
    """Combine the pre-recovery standing with the recovery grade.

    Returns the resolved score and its concept under the final cutoffs.
    Without a recovery grade the pre-recovery standing is returned as is
    (the concept stays ``cbrec``, so an attendance override survives).
    """
    if rec_concept is None:
        return pre_rec_score, cbrec
    if not _rec_eligible(cbrec, policy, attendance_forced):
        raise IneligibleRec(
            f"recovery grade present but {cbrec} is not eligible under "
            f"{policy.rec_eligibility}"
        )
    rec_score = concept_to_score(rec_concept, policy.scale.scheme)
    if policy.rec_policy == "replace":
        resolved = rec_score
    elif policy.rec_policy in ("max_of", "open_rec_max"):
        resolved = max(pre_rec_score, rec_score)
    else:  # mean_of
        resolved = (pre_rec_score + rec_score) / 2
    resolved = clamp_score(resolved)
    return resolved, score_to_concept(resolved, policy.final_cutoffs())


# Full pipeline
# -------------

def _assessment_outcome(record: StudentRecord, name: str, policy: CoursePolicy,
                        trail: list):
    result = record.result(name)
    if result == MISSED:
        return None
    configured = policy.question_weights.get(name)
    if configured is not None:
        if len(configured) != len(result):
            raise GradeforgeError(
                f"{record.student_id}: {name} has {len(result)} questions, "
                f"policy expects {len(configured)}"
            )
        weights = configured
    else:
        weights = [Fraction(1, len(result))] * len(result)
    score = aggregate_weighted(
        [(grade.concept, weight) for grade, weight in zip(result, weights)],
        policy.scale,
    )
    concept = score_to_concept(score, policy.cutoffs_for(name))
    capped = False
    if name not in _CAP_EXEMPT:
        after = apply_language_cap(concept, record, policy)
        if after != concept:
            concept, capped = after, True
            score = min(score, concept_to_score(concept, policy.scale.scheme))
    trail.append(
        {
            "step": "assessment",
            "assessment": name,
            "score": str(score),
            "display": render_score(score),
            "concept": str(concept),
            "capped": capped,
        }
    )
    return {"score": score, "concept": concept}


def compute_final_record(record: StudentRecord, policy: CoursePolicy) -> GradeOutcome:
    """Run one student through the whole grading pipeline."""
    trail: list = []

    record, filled = resolve_sub(record, policy)
    if filled:
        source = SUB if policy.sub_policy == "separate_sub_exam" else REC
        trail.append({"step": "sub", "policy": policy.sub_policy,
                      "filled": filled, "source": source})
    rec_used_as_substitute = policy.sub_policy == "rec_substitutes" and filled is not None

    assessed: dict = {}
    for name in list(policy.weights) + [SUB, REC]:
        if name in assessed:
            continue
        assessed[name] = _assessment_outcome(record, name, policy, trail)

    def concept_of(name):
        entry = assessed.get(name)
        return None if entry is None else entry["concept"]

    scheme = policy.scale.scheme
    cr = clamp_score(
        sum(
            (
                weight * concept_to_score(assessed[name]["concept"], scheme)
                for name, weight in policy.weights.items()
                if assessed.get(name) is not None
            ),
            Fraction(0),
        )
    )
    trail.append({"step": "cr", "score": str(cr), "display": render_score(cr)})

    with_bonuses, bonuses = apply_bonuses(
        cr,
        concept_of(EXAM1),
        concept_of(EXAM2),
        (record.activities_done, record.activities_total, concept_of(ACTIVITIES)),
        policy,
    )
    for kind, amount in bonuses:
        trail.append({"step": "bonus", "kind": kind, "amount": str(amount),
                      "stage": policy.bonus_stage})
    score_pre = with_bonuses if policy.bonus_stage == "pre_cutoff" else cr

    forced = apply_attendance_rule(record, policy)
    fraction = attendance_fraction(record)
    trail.append(
        {
            "step": "attendance",
            "fraction": None if fraction is None else str(fraction),
            "forced": None if forced is None else str(forced),
        }
    )

    if forced is not None:
        cbrec = forced
    else:
        cbrec = score_to_concept(score_pre, policy.final_cutoffs())
    trail.append({"step": "cbrec", "concept": str(cbrec)})

    rec_entry = assessed.get(REC)
    rec_concept = None if rec_entry is None else rec_entry["concept"]
    attendance_forced = forced is not None
    skipped_rec = False
    if rec_concept is not None and rec_used_as_substitute and not _rec_eligible(
        cbrec, policy, attendance_forced
    ):
        # The recovery grade already stood in for a missed assessment; a
        # student outside the recovery band simply gets no second use of it.
        skipped_rec = True
        rec_concept = None

    if rec_concept is not None:
        final_score, final_concept = resolve_rec(
            cbrec, rec_concept, score_pre, policy, attendance_forced
        )
        trail.append(
            {
                "step": "rec",
                "policy": policy.rec_policy,
                "rec_concept": str(rec_concept),
                "rec_score": str(concept_to_score(rec_concept, scheme)),
                "pre_score": str(score_pre),
                "resolved": str(final_score),
            }
        )
    else:
        if skipped_rec:
            trail.append({"step": "rec", "policy": policy.rec_policy,
                          "skipped": "consumed as substitute"})
        if forced is not None:
            final_concept = forced
            final_score = concept_to_score(forced, scheme)
        else:
            final_score, final_concept = score_pre, cbrec

    if policy.bonus_stage == "post_cutoff" and not (forced is not None and rec_concept is None):
        total_bonus = sum((amount for _, amount in bonuses), Fraction(0))
        if total_bonus:
            final_score = clamp_score(final_score + total_bonus)
            final_concept = score_to_concept(final_score, policy.final_cutoffs())

    registered = registration_concept(final_concept)
    trail.append(
        {
            "step": "final",
            "score": str(final_score),
            "display": render_score(final_score),
            "concept": str(final_concept),
            "registered": str(registered),
        }
    )

    return GradeOutcome(
        student_id=record.student_id,
        assessments=assessed,
        cr=cr,
        cbrec=cbrec,
        rec=None if rec_entry is None else rec_entry["concept"],
        bonuses=bonuses,
        final_score=final_score,
        final_concept=final_concept,
        registered=registered,
        audit_trail=tuple(trail),
    )


def replay_audit(trail, policy: CoursePolicy) -> Score:
    """Recompute the final score from an audit trail alone.

    Used to verify that a stored trail is complete: the replayed value must
    equal the outcome's final score.
    """
    cr = None
    bonuses = []
    forced = None
    rec = None
    stage = policy.bonus_stage
    for entry in trail:
        step = entry["step"]
        if step == "cr":
            cr = Fraction(entry["score"])
        elif step == "bonus":
            bonuses.append(Fraction(entry["amount"]))
            stage = entry["stage"]
        elif step == "attendance":
            forced = entry["forced"]
        elif step == "rec" and "resolved" in entry:
            rec = {
                "pre": Fraction(entry["pre_score"]),
                "score": Fraction(entry["rec_score"]),
                "policy": entry["policy"],
            }
    if cr is None:
        raise GradeforgeError("audit trail has no cr step")
    total_bonus = sum(bonuses, Fraction(0))
    score_pre = clamp_score(cr + total_bonus) if stage == "pre_cutoff" else cr
    if rec is not None:
        if rec["policy"] == "replace":
            final = rec["score"]
        elif rec["policy"] in ("max_of", "open_rec_max"):
            final = max(rec["pre"], rec["score"])
        else:
            final = (rec["pre"] + rec["score"]) / 2
        final = clamp_score(final)
    elif forced is not None:
        final = concept_to_score(Concept.parse(forced), policy.scale.scheme)
    else:
        final = score_pre
    if stage == "post_cutoff" and not (forced is not None and rec is None):
        if total_bonus:
            final = clamp_score(final + total_bonus)
    return final


# Cohort helpers
# --------------

def compute_outcomes(records, policy: CoursePolicy) -> list[GradeOutcome]:
    """Pipeline over a roster, sorted by student id for stable output."""
    return [
        compute_final_record(record, policy)
        for record in sorted(records, key=lambda r: r.student_id)
    ]


def outcome_csv_header(policy: CoursePolicy) -> list[str]:
    return ["student_id", *policy.weights, "cr", "cbrec", "rec", "final", "registered"]


def export_outcomes_csv(outcomes, policy: CoursePolicy) -> str:
    """Render outcomes as a stable CSV document (UTF-8 text, LF endings).

    Identical outcomes always produce identical bytes: rows are sorted by
    student id and scores rendered half-up to two decimals.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(outcome_csv_header(policy))
    for outcome in sorted(outcomes, key=lambda o: o.student_id):
        row = [outcome.student_id]
        for name in policy.weights:
            entry = outcome.assessments.get(name)
            row.append("" if entry is None else str(entry["concept"]))
        row.extend(
            [
                render_score(outcome.cr),
                str(outcome.cbrec),
                "" if outcome.rec is None else str(outcome.rec),
                str(outcome.final_concept),
                str(outcome.registered),
            ]
        )
        writer.writerow(row)
    return buffer.getvalue()
