"""Course workspace: configuration, records, and snapshots on disk.

A workspace is a directory with a ``course.json`` at its root describing
the term, the grading policy, and where the other artifacts live.  All
paths in the config are relative to the root and every artifact written
by the tools stays under the root.

Snapshots freeze (policy, records, outcomes) together.  The outcome CSV
is stored verbatim and checked on every load by recomputing it from the
stored records and policy, so a snapshot that no longer reproduces its
own outcomes refuses to load instead of silently drifting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import GradeforgeError
from .exambank import ExamTemplate, QuestionBank, default_template, load_bank
from .policy import (
    MISSED,
    CoursePolicy,
    QuestionGrade,
    StudentRecord,
    compute_outcomes,
    export_outcomes_csv,
)
from .scale import Concept

CONFIG_NAME = "course.json"
SNAPSHOT_DIR = "snapshots"


class WorkspaceError(GradeforgeError):
    """The workspace is missing, malformed, or inconsistent."""


def record_to_dict(record: StudentRecord) -> dict:
    assessments = {}
    for name, result in record.assessments.items():
        if result == MISSED:
            assessments[name] = "missed"
        else:
            assessments[name] = [
                {"concept": str(grade.concept), "errors": list(grade.errors)}
                for grade in result
            ]
    data = {
        "student_id": record.student_id,
        "assessments": assessments,
        "activities_done": record.activities_done,
        "activities_total": record.activities_total,
    }
    if record.uses_portugol_after_exam1:
        data["uses_portugol_after_exam1"] = True
    if record.campus is not None:
        data["campus"] = record.campus
    if record.cancelled:
        data["cancelled"] = True
    if record.prior_failures:
        data["prior_failures"] = dict(record.prior_failures)
    return data


def record_from_dict(data: dict) -> StudentRecord:
    assessments = {}
    for name, result in data.get("assessments", {}).items():
        if result == "missed":
            assessments[name] = MISSED
        else:
            assessments[name] = tuple(
                QuestionGrade(
                    concept=Concept.parse(grade["concept"]),
                    errors=tuple(grade.get("errors", ())),
                )
                for grade in result
            )
    return StudentRecord(
        student_id=data["student_id"],
        assessments=assessments,
        activities_done=int(data.get("activities_done", 0)),
        activities_total=int(data.get("activities_total", 0)),
        uses_portugol_after_exam1=bool(
            data.get("uses_portugol_after_exam1", False)),
        campus=data.get("campus"),
        cancelled=bool(data.get("cancelled", False)),
        prior_failures=dict(data.get("prior_failures", {})),
    )


@dataclass(frozen=True)
class CohortSnapshot:
    snapshot_id: int
    term: str
    policy: CoursePolicy
    records: tuple
    outcomes_csv: str
    produced_at: str

    def outcomes(self):
        return compute_outcomes(list(self.records), self.policy)


class Workspace:
    """A validated on-disk course workspace."""

    def __init__(self, root, config: dict):
        self.root = Path(root)
        self.config = config
        self.term = config.get("term", "")
        try:
            self.policy = CoursePolicy.from_dict(config["policy"])
        except KeyError:
            raise WorkspaceError("course.json has no policy section") from None

    @classmethod
    def load(cls, root) -> "Workspace":
        root = Path(root)
        path = root / CONFIG_NAME
        if not path.is_file():
            raise WorkspaceError(f"{path} not found; run init first")
        try:
            config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise WorkspaceError(f"{path}: {exc}") from None
        if config.get("schema") != 1:
            raise WorkspaceError(f"{path}: unsupported schema "
                                 f"{config.get('schema')!r}")
        return cls(root, config)

    def _path(self, key: str, default: str) -> Path:
        relative = Path(self.config.get(key, default))
        if relative.is_absolute() or ".." in relative.parts:
            raise WorkspaceError(f"{key} must stay under the workspace root")
        return self.root / relative

    # Configured artifacts

    def bank(self) -> QuestionBank:
        return load_bank(self._path("bank", "bank.json"))

    def roster(self) -> list:
        path = self._path("roster", "roster.csv")
        if not path.is_file():
            raise WorkspaceError(f"{path} not found")
        students = []
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and line != "student_id":
                students.append(line)
        if not students:
            raise WorkspaceError(f"{path} lists no students")
        return students

    def records(self) -> list:
        path = self._path("records", "records.json")
        if not path.is_file():
            raise WorkspaceError(f"{path} not found")
        data = json.loads(path.read_text(encoding="utf-8"))
        return [record_from_dict(row) for row in data.get("students", [])]

    def write_records(self, records) -> None:
        path = self._path("records", "records.json")
        data = {
            "students": [
                record_to_dict(record)
                for record in sorted(records, key=lambda r: r.student_id)
            ]
        }
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")

    def catalog(self) -> dict:
        path = self._path("catalog", "catalog.json")
        if not path.is_file():
            raise WorkspaceError(f"{path} not found")
        raw = json.loads(path.read_text(encoding="utf-8"))
        return {int(code): text for code, text in raw.items()}

    def template(self, assessment: str) -> ExamTemplate:
        templates = self.config.get("templates", {})
        if assessment in templates:
            return ExamTemplate.from_dict(assessment, templates[assessment])
        return default_template(assessment)

    def submissions_root(self, assessment: str) -> Path:
        return self._path("submissions_root", "submissions") / assessment

    def layout(self) -> str:
        return self.config.get("layout", "question")

    def check_command(self) -> list:
        command = self.config.get("check_command")
        if not command:
            raise WorkspaceError("course.json has no check_command")
        return list(command)

    def reports_dir(self) -> Path:
        path = self._path("reports", "reports")
        path.mkdir(parents=True, exist_ok=True)
        return path

    def save_policy(self, policy: CoursePolicy) -> None:
        self.policy = policy
        self.config["policy"] = policy.to_dict()
        path = self.root / CONFIG_NAME
        path.write_text(json.dumps(self.config, indent=2) + "\n",
                        encoding="utf-8")

    # Snapshots

    def snapshot_dir(self) -> Path:
        path = self.root / SNAPSHOT_DIR
        path.mkdir(parents=True, exist_ok=True)
        return path

    def snapshot_ids(self) -> list:
        return sorted(
            int(p.stem) for p in self.snapshot_dir().glob("*.json")
            if p.stem.isdigit()
        )

    def save_snapshot(self, policy: CoursePolicy | None = None,
                      records=None) -> CohortSnapshot:
        policy = policy if policy is not None else self.policy
        records = list(records) if records is not None else self.records()
        records.sort(key=lambda r: r.student_id)
        csv_text = export_outcomes_csv(compute_outcomes(records, policy),
                                       policy)
        ids = self.snapshot_ids()
        snapshot = CohortSnapshot(
            snapshot_id=(ids[-1] + 1) if ids else 1,
            term=self.term,
            policy=policy,
            records=tuple(records),
            outcomes_csv=csv_text,
            produced_at=datetime.now(timezone.utc).isoformat(),
        )
        payload = {
            "schema": 1,
            "snapshot_id": snapshot.snapshot_id,
            "term": snapshot.term,
            "produced_at": snapshot.produced_at,
            "policy": policy.to_dict(),
            "records": [record_to_dict(r) for r in records],
            "outcomes_csv": csv_text,
        }
        target = self.snapshot_dir() / f"{snapshot.snapshot_id:04d}.json"
        target.write_text(json.dumps(payload, indent=2) + "\n",
                          encoding="utf-8")
        return snapshot

    def load_snapshot(self, snapshot_id: int | None = None) -> CohortSnapshot:
        """Load a snapshot (latest by default) and verify it replays."""
        ids = self.snapshot_ids()
        if not ids:
            raise WorkspaceError("no snapshots recorded yet")
        chosen = ids[-1] if snapshot_id is None else snapshot_id
        path = self.snapshot_dir() / f"{chosen:04d}.json"
        if not path.is_file():
            raise WorkspaceError(f"snapshot {chosen} not found")
        data = json.loads(path.read_text(encoding="utf-8"))
        policy = CoursePolicy.from_dict(data["policy"])
        records = tuple(record_from_dict(row) for row in data["records"])
        snapshot = CohortSnapshot(
            snapshot_id=data["snapshot_id"],
            term=data.get("term", ""),
            policy=policy,
            records=records,
            outcomes_csv=data["outcomes_csv"],
            produced_at=data.get("produced_at", ""),
        )
        replayed = export_outcomes_csv(
            compute_outcomes(list(records), policy), policy)
        if replayed != snapshot.outcomes_csv:
            raise WorkspaceError(
                f"snapshot {chosen} does not replay to its stored outcomes")
        return snapshot


_SAMPLE_BANK = {
    "questions": [
        {
            "id": f"{difficulty[:3]}1",
            "topic": topic,
            "difficulty": difficulty,
            "variants": [
                {
                    "id": f"v{k}",
                    "statement": f"Sample {difficulty} question, variant {k}.",
                    "answer_key": f"Expected answer for variant {k}.",
                }
                for k in range(1, 5)
            ],
        }
        for difficulty, topic in (
            ("simple", "expressions"),
            ("medium", "conditionals"),
            ("complex", "loops"),
        )
    ]
}

_SAMPLE_CATALOG = {
    "1": "Wrong output format.",
    "2": "Off-by-one in a loop bound.",
    "3": "Missing input validation.",
}


def init_workspace(root, term: str = "2017.2") -> Path:
    """Create a runnable workspace skeleton; refuses to overwrite one."""
    root = Path(root)
    config_path = root / CONFIG_NAME
    if config_path.exists():
        raise WorkspaceError(f"{config_path} already exists")
    root.mkdir(parents=True, exist_ok=True)
    config = {
        "schema": 1,
        "term": term,
        "policy": CoursePolicy().to_dict(),
        "bank": "bank.json",
        "roster": "roster.csv",
        "records": "records.json",
        "catalog": "catalog.json",
        "submissions_root": "submissions",
        "layout": "question",
        "reports": "reports",
        "check_command": ["/bin/sh", "-c", "test -s {file}"],
        "templates": {},
    }
    config_path.write_text(json.dumps(config, indent=2) + "\n",
                           encoding="utf-8")
    (root / "bank.json").write_text(
        json.dumps(_SAMPLE_BANK, indent=2) + "\n", encoding="utf-8")
    (root / "catalog.json").write_text(
        json.dumps(_SAMPLE_CATALOG, indent=2) + "\n", encoding="utf-8")
    (root / "roster.csv").write_text(
        "student_id\n110001\n110002\n110003\n110004\n", encoding="utf-8")
    (root / "records.json").write_text(
        json.dumps({"students": []}, indent=2) + "\n", encoding="utf-8")
    (root / "submissions").mkdir(exist_ok=True)
    return root
