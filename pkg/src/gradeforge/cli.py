"""Command line interface.

Every command is a thin wrapper over the library: load the workspace, call
one core function, write the artifacts it returns.  Exit codes follow the
usual triage convention: 0 clean, 1 the run worked but produced findings
(validation problems, ingest mismatches, failed checks, fairness findings),
2 the run itself could not complete.
"""

from __future__ import annotations

import functools
import json
from dataclasses import replace
from pathlib import Path

import click

from gradeforge.analytics import (
    cancellation_stats,
    class_distribution,
    failure_report,
    failure_report_csv,
    fairness_audit,
    fairness_csv,
    prior_failure_stats,
)
from gradeforge.errors import GradeforgeError
from gradeforge.exambank import (
    assign_variants,
    exam_manifest,
    render_answer_key,
    render_exam,
    sample_mc_block,
    validate_bank,
)
from gradeforge.policy import (
    QuestionGrade,
    StudentRecord,
    compute_outcomes,
    export_outcomes_csv,
)
from gradeforge.scale import render_score
from gradeforge.submissions import (
    export_grades_csv,
    ingest_submissions,
    render_feedback,
    run_check_command,
)
from gradeforge.workspace import Workspace, init_workspace

_EXTENSIONS = {"markdown": "md", "latex_source": "tex"}


def _guarded(fn):
    """Turn library errors into exit code 2 with a one-line message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GradeforgeError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(2) from None

    return wrapper


def _workspace_option(fn):
    return click.option(
        "--workspace", "-w", "root", default=".", show_default=True,
        type=click.Path(file_okay=False), help="Workspace directory.",
    )(fn)


def _load_json(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GradeforgeError(f"{path}: {exc}") from None


@click.group()
def main():
    """Deterministic course assessment pipeline."""


@main.command()
@click.argument("path", default=".", type=click.Path(file_okay=False))
@click.option("--term", default="2017.2", show_default=True)
@_guarded
def init(path, term):
    """Scaffold a new workspace with a sample bank and roster."""
    root = init_workspace(path, term=term)
    click.echo(f"initialized workspace at {root}")


# bank ------------------------------------------------------------------


@main.group()
def bank():
    """Question bank maintenance."""


@bank.command("validate")
@_workspace_option
@_guarded
def bank_validate(root):
    """Check the bank for structural problems."""
    workspace = Workspace.load(root)
    loaded = workspace.bank()
    findings = validate_bank(loaded)
    for finding in findings:
        click.echo(f"{finding['question']}: {finding['message']}")
    if findings:
        raise SystemExit(1)
    click.echo(f"bank ok: {len(loaded.questions)} questions")


# exams -----------------------------------------------------------------


@main.group()
def exam():
    """Individualized exam generation."""


@exam.command("generate")
@click.option("--assessment", required=True)
@click.option("--seed", type=int, required=True)
@click.option("--format", "fmt", default="markdown", show_default=True,
              type=click.Choice(sorted(_EXTENSIONS)))
@_workspace_option
@_guarded
def exam_generate(assessment, seed, fmt, root):
    """Generate one exam per roster student, plus answer keys."""
    workspace = Workspace.load(root)
    loaded = workspace.bank()
    template = workspace.template(assessment)
    exams = assign_variants(workspace.roster(), template, loaded, seed)

    ext = _EXTENSIONS[fmt]
    exam_dir = Path(workspace.root) / "exams" / assessment
    key_dir = Path(workspace.root) / "answer_keys" / assessment
    exam_dir.mkdir(parents=True, exist_ok=True)
    key_dir.mkdir(parents=True, exist_ok=True)
    for generated in exams:
        (exam_dir / f"{generated.student_id}.{ext}").write_text(
            render_exam(generated, loaded, fmt, template), encoding="utf-8")
        (key_dir / f"{generated.student_id}.{ext}").write_text(
            render_answer_key(generated, loaded, fmt, template),
            encoding="utf-8")
    manifest = exam_manifest(template, loaded, seed, exams, fmt)
    (exam_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    click.echo(f"wrote {len(exams)} exams to {exam_dir}")


@main.group()
def mc():
    """Multiple-choice sampling."""


@mc.command("sample")
@click.option("--assessment", required=True)
@click.option("--seed", type=int, required=True)
@click.option("--student", required=True)
@_workspace_option
@_guarded
def mc_sample(assessment, seed, student, root):
    """Show one student's multiple-choice draw for a template."""
    workspace = Workspace.load(root)
    template = workspace.template(assessment)
    if not template.mc_counts:
        raise GradeforgeError(
            f"template for {assessment} has no multiple-choice block")
    items = sample_mc_block(workspace.bank(), template.mc_counts, seed, student)
    click.echo(json.dumps({
        "assessment": assessment,
        "student_id": student,
        "seed": seed,
        "items": [
            {"question": question_id, "option_order": list(order)}
            for question_id, order in items
        ],
    }, indent=2))


# submissions -----------------------------------------------------------


def _scan(workspace: Workspace, assessment: str):
    return ingest_submissions(
        workspace.submissions_root(assessment), workspace.layout())


@main.command()
@click.option("--assessment", required=True)
@_workspace_option
@_guarded
def ingest(assessment, root):
    """Read grader annotations from submission filenames into records."""
    workspace = Workspace.load(root)
    report = _scan(workspace, assessment)

    by_student: dict = {}
    for entry in report.entries:
        by_student.setdefault(entry.student_id, []).append(entry)
    records = {r.student_id: r for r in workspace.records()}
    for student_id, entries in by_student.items():
        grades = tuple(
            QuestionGrade(concept=e.concept, errors=e.codes)
            for e in sorted(entries, key=lambda e: e.question)
        )
        record = records.get(student_id) or StudentRecord(
            student_id=student_id, assessments={})
        assessments = dict(record.assessments)
        assessments[assessment] = grades
        records[student_id] = replace(record, assessments=assessments)
    workspace.write_records(records.values())

    reports = workspace.reports_dir()
    (reports / f"ingest-{assessment}.json").write_text(json.dumps({
        "assessment": assessment,
        "scanned": report.scanned,
        "graded": len(report.entries),
        "shadowed": report.shadowed,
        "mismatches": report.mismatches,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (reports / f"grades-{assessment}.csv").write_text(
        export_grades_csv(report.entries, assessment), encoding="utf-8")

    click.echo(f"scanned {report.scanned} files: {len(report.entries)} graded, "
               f"{len(report.shadowed)} shadowed, "
               f"{len(report.mismatches)} mismatches")
    for mismatch in report.mismatches:
        click.echo(f"mismatch: {mismatch['path']}: {mismatch['reason']}")
    if report.mismatches:
        raise SystemExit(1)


@main.command()
@click.option("--assessment", required=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@_workspace_option
@_guarded
def check(assessment, jobs, root):
    """Run the configured sanity command over every submission."""
    workspace = Workspace.load(root)
    report = _scan(workspace, assessment)
    paths = [entry.path for entry in report.entries]
    results = run_check_command(paths, workspace.check_command(), jobs=jobs)
    failed = [r for r in results if not r.ok]
    for result in failed:
        status = "timeout" if result.exit_code is None else f"exit {result.exit_code}"
        click.echo(f"FAIL {result.path} ({status})")
        if result.output.strip():
            click.echo(f"  {result.output.strip().splitlines()[0]}")
    click.echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise SystemExit(1)


@main.group()
def feedback():
    """Feedback documents for graded submissions."""


@feedback.command("render")
@click.option("--assessment", required=True)
@_workspace_option
@_guarded
def feedback_render(assessment, root):
    """Write one markdown feedback file per student."""
    workspace = Workspace.load(root)
    report = _scan(workspace, assessment)
    documents = render_feedback(report.entries, workspace.catalog(), assessment)
    out_dir = Path(workspace.root) / "feedback" / assessment
    out_dir.mkdir(parents=True, exist_ok=True)
    for student_id, text in sorted(documents.items()):
        (out_dir / f"{student_id}.md").write_text(text, encoding="utf-8")
    click.echo(f"wrote {len(documents)} feedback files to {out_dir}")


# grading ---------------------------------------------------------------


@main.group()
def grades():
    """Final grade computation."""


@grades.command("compute")
@_workspace_option
@_guarded
def grades_compute(root):
    """Run the full pipeline and print the outcome table."""
    workspace = Workspace.load(root)
    outcomes = compute_outcomes(workspace.records(), workspace.policy)
    csv_text = export_outcomes_csv(outcomes, workspace.policy)
    (workspace.reports_dir() / "outcomes.csv").write_text(
        csv_text, encoding="utf-8")
    click.echo(csv_text, nl=False)


# reporting -------------------------------------------------------------


@main.group()
def report():
    """Cohort statistics."""


@report.command("stats")
@click.option("--failures", "failures_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON term rows: [{term, modality, fraction, students, classes}].")
@click.option("--aggregation", default="simple", show_default=True,
              type=click.Choice(["simple", "student_weighted"]))
@click.option("--survey", "survey_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON rows: [{student_id, term, failures_class, failures_bl}].")
@click.option("--labs", "labs_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON rows: [{class_id, enrolled, cancelled}].")
@_workspace_option
@_guarded
def report_stats(failures_path, aggregation, survey_path, labs_path, root):
    """Summarize the cohort, or external survey/enrollment data."""
    workspace = Workspace.load(root)

    if failures_path:
        rows = [
            (row["term"], row["modality"], row["fraction"],
             int(row["students"]), int(row["classes"]))
            for row in _load_json(failures_path)
        ]
        summary = failure_report(rows, aggregation)
        csv_text = failure_report_csv(summary)
        (workspace.reports_dir() / "failures.csv").write_text(
            csv_text, encoding="utf-8")
        click.echo(csv_text, nl=False)
        click.echo(f"note: {summary['note']}")
        return

    if survey_path:
        rows = [
            (row["student_id"], row["term"],
             int(row["failures_class"]), int(row["failures_bl"]))
            for row in _load_json(survey_path)
        ]
        stats = prior_failure_stats(rows)
        for term in sorted(stats):
            entry = stats[term]
            click.echo(
                f"term {term}: students {entry['students']}, "
                f"class {float(entry['class_fraction']) * 100:.2f}%, "
                f"bl {float(entry['bl_fraction']) * 100:.2f}%, "
                f"any {float(entry['any_fraction']) * 100:.2f}%")
        return

    if labs_path:
        rows = [
            (row["class_id"], int(row["enrolled"]), int(row["cancelled"]))
            for row in _load_json(labs_path)
        ]
        stats = cancellation_stats(rows)
        click.echo(f"classes {stats['classes']}, students {stats['students']}")
        click.echo(f"mean enrolled {render_score(stats['mean_enrolled'])}, "
                   f"mean remaining {render_score(stats['mean_remaining'])}")
        click.echo(f"reduction {float(stats['reduction']) * 100:.2f}%")
        return

    outcomes = compute_outcomes(workspace.records(), workspace.policy)
    stats = class_distribution(outcomes, term=workspace.term)
    for bucket, share in stats.concept_distribution.items():
        click.echo(f"{bucket} {float(share) * 100:.2f}%")
    click.echo(f"students {stats.n_students}")
    click.echo(f"gpa mean {render_score(stats.gpa_mean)}")
    click.echo(f"failure {float(stats.failure_fraction) * 100:.2f}%")


# audits ----------------------------------------------------------------


@main.group()
def audit():
    """Consistency audits over computed outcomes."""


@audit.command("fairness")
@_workspace_option
@_guarded
def audit_fairness(root):
    """Find students ranked above someone who ended up scoring higher."""
    workspace = Workspace.load(root)
    outcomes = compute_outcomes(workspace.records(), workspace.policy)
    findings = fairness_audit(outcomes)
    (workspace.reports_dir() / "fairness.csv").write_text(
        fairness_csv(findings), encoding="utf-8")
    for finding in findings:
        click.echo(finding.explanation)
    if findings:
        click.echo(f"{len(findings)} fairness findings")
        raise SystemExit(1)
    click.echo("no fairness findings")


# service ---------------------------------------------------------------


@main.group()
def calibrate():
    """Interactive policy calibration."""


@calibrate.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=7077, show_default=True)
@click.option("--static", "static_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="Also serve a built console from this directory.")
@_workspace_option
@_guarded
def calibrate_serve(host, port, static_dir, root):
    """Serve the calibration API for this workspace."""
    import uvicorn

    from gradeforge.service import create_app

    app = create_app(Workspace.load(root), static_dir=static_dir)
    click.echo(f"serving calibration api on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
