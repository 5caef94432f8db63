"""Calibration service: preview policy changes, then persist them.

The service wraps one workspace.  All reads and previews are served from an
in-memory cohort snapshot; nothing touches disk until POST /api/policy, which
checks the caller saw the latest snapshot before writing a new one.

Error mapping: a request that does not match the schema is a 400, a request
that is well-formed but violates a policy invariant (weights that do not sum
to one, cutoffs out of order, unknown recovery policy) is a 422.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from gradeforge.analytics import class_distribution, fairness_audit
from gradeforge.errors import GradeforgeError
from gradeforge.policy import CoursePolicy, GradeOutcome, compute_outcomes
from gradeforge.scale import render_score
from gradeforge.service.schemas import PolicyRequest, PreviewRequest
from gradeforge.workspace import Workspace, record_to_dict

SCHEMA_VERSION = 1


def apply_overrides(policy: CoursePolicy, request: PreviewRequest) -> CoursePolicy:
    """Merge request overrides into a policy, revalidating the result."""
    data = policy.to_dict()
    if request.cutoffs is not None:
        overrides = dict(data.get("cutoff_overrides", {}))
        overrides["final"] = [
            {"min": row.min, "concept": row.concept} for row in request.cutoffs
        ]
        data["cutoff_overrides"] = overrides
    if request.weights is not None:
        data["weights"] = dict(request.weights)
    if request.bonuses is not None:
        if request.bonuses.improvement_factor is not None:
            data["improvement_bonus_factor"] = request.bonuses.improvement_factor
        if request.bonuses.activity_factor is not None:
            data["activity_bonus_factor"] = request.bonuses.activity_factor
    if request.rec_policy is not None:
        data["rec_policy"] = request.rec_policy
    return CoursePolicy.from_dict(data)


def outcome_json(outcome: GradeOutcome) -> dict:
    return {
        "student_id": outcome.student_id,
        "assessments": {
            name: None if graded is None else {
                "score": render_score(graded["score"]),
                "concept": str(graded["concept"]),
            }
            for name, graded in sorted(outcome.assessments.items())
        },
        "cr": render_score(outcome.cr),
        "cbrec": str(outcome.cbrec),
        "rec": None if outcome.rec is None else str(outcome.rec),
        "bonuses": [
            {"name": name, "amount": render_score(amount)}
            for name, amount in outcome.bonuses
        ],
        "final_score": render_score(outcome.final_score),
        "final_concept": str(outcome.final_concept),
        "registered": str(outcome.registered),
    }


def distribution_json(outcomes) -> dict:
    stats = class_distribution(outcomes)
    return {bucket: float(share) for bucket, share in stats.concept_distribution.items()}


class _CalibrationState:
    """Current snapshot plus the draft overrides from the last preview."""

    def __init__(self, workspace: Workspace):
        self.workspace = workspace
        if workspace.snapshot_ids():
            self.snapshot = workspace.load_snapshot()
        else:
            self.snapshot = workspace.save_snapshot()
        self.draft = PreviewRequest()
        self.lock = threading.Lock()


def create_app(workspace: Workspace, static_dir=None) -> FastAPI:
    app = FastAPI(title="gradeforge calibration", docs_url=None, redoc_url=None)
    state = _CalibrationState(workspace)

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError):
        errors = [
            {"loc": ".".join(str(part) for part in err.get("loc", ())),
             "msg": str(err.get("msg", ""))}
            for err in exc.errors()
        ]
        return JSONResponse(
            status_code=400,
            content={"detail": "malformed request", "errors": errors},
        )

    @app.exception_handler(GradeforgeError)
    async def _invariant(request: Request, exc: GradeforgeError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/api/snapshot")
    def snapshot():
        snap = state.snapshot
        outcomes = snap.outcomes()
        by_id = {o.student_id: o for o in outcomes}
        return {
            "schema": SCHEMA_VERSION,
            "snapshot_id": snap.snapshot_id,
            "term": snap.term,
            "produced_at": snap.produced_at,
            "policy": snap.policy.to_dict(),
            "distribution": distribution_json(outcomes),
            "students": [
                {
                    "record": record_to_dict(record),
                    "outcome": outcome_json(by_id[record.student_id]),
                }
                for record in snap.records
            ],
        }

    @app.post("/api/preview")
    def preview(request: PreviewRequest):
        snap = state.snapshot
        policy = apply_overrides(snap.policy, request)
        outcomes = compute_outcomes(list(snap.records), policy)
        before = {o.student_id: o for o in snap.outcomes()}
        deltas = []
        for outcome in outcomes:
            base = before[outcome.student_id]
            if outcome.final_concept != base.final_concept:
                deltas.append({
                    "student_id": outcome.student_id,
                    "before": str(base.final_concept),
                    "after": str(outcome.final_concept),
                    "cr": render_score(outcome.cr),
                })
        with state.lock:
            state.draft = request
        return {
            "schema": SCHEMA_VERSION,
            "snapshot_id": snap.snapshot_id,
            "outcomes": [outcome_json(o) for o in outcomes],
            "distribution": distribution_json(outcomes),
            "deltas": deltas,
        }

    @app.get("/api/audit")
    def audit():
        snap = state.snapshot
        draft = state.draft
        policy = apply_overrides(snap.policy, draft)
        outcomes = compute_outcomes(list(snap.records), policy)
        findings = fairness_audit(outcomes)
        return {
            "schema": SCHEMA_VERSION,
            "snapshot_id": snap.snapshot_id,
            "draft_applied": not draft.is_empty(),
            "findings": [
                {
                    "higher_id": f.higher_id,
                    "lower_id": f.lower_id,
                    "cr_gap": render_score(f.cr_gap),
                    "final_gap": render_score(f.final_gap),
                    "explanation": f.explanation,
                }
                for f in findings
            ],
        }

    @app.post("/api/policy")
    def persist(request: PolicyRequest):
        with state.lock:
            current = state.snapshot
            if request.snapshot_id != current.snapshot_id:
                return JSONResponse(
                    status_code=409,
                    content={
                        "detail": (
                            f"snapshot {request.snapshot_id} is stale; "
                            f"current is {current.snapshot_id}"
                        ),
                        "snapshot_id": current.snapshot_id,
                    },
                )
            policy = apply_overrides(current.policy, request)
            workspace.save_policy(policy)
            state.snapshot = workspace.save_snapshot(
                policy=policy, records=list(current.records)
            )
            state.draft = PreviewRequest()
            return {
                "schema": SCHEMA_VERSION,
                "snapshot_id": state.snapshot.snapshot_id,
            }

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
