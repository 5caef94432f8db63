"""Grader annotation ingestion and submission handling.

Graders communicate per-question results by renaming the submitted file:
the name starts with the concept, optionally followed by comma-separated
error codes, then an underscore and the student id, then the original
extension.  ``B-,2,4,5_RAaluno.pdf`` reads as: concept B-, error codes
2, 4 and 5, student RAaluno.

Everything downstream (feedback, grade export) is derived from those
names plus an error-code catalog, so the filesystem remains the single
source of truth for grading state.
"""

from __future__ import annotations

import csv
import io
import re
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GradeforgeError
from .scale import Concept, UnknownConcept

#: Concepts a grader may put on a submitted file.  O marks absence and E is
#: assigned by the registrar, so neither belongs on a question.
_GRADEABLE_LETTERS = "ABCDF"


class AnnotationSyntax(GradeforgeError):
    """Malformed annotation filename; `index` is the failing character."""

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (at index {index})")
        self.index = index


class EmptyRoot(GradeforgeError):
    """The ingest root exists but contains no submission files."""


class CommandNotFound(GradeforgeError):
    """The configured check command executable does not exist."""


class UnknownErrorCode(GradeforgeError):
    """An annotation uses a code the feedback catalog does not define."""


@dataclass(frozen=True)
class Annotation:
    concept: Concept
    codes: tuple
    student_id: str
    extension: str

    def filename(self) -> str:
        """Canonical form: codes sorted ascending without duplicates."""
        head = str(self.concept)
        if self.codes:
            head += "," + ",".join(str(c) for c in self.codes)
        return f"{head}_{self.student_id}.{self.extension}"


def parse_annotation(name: str) -> Annotation:
    """Parse one annotation filename.

    Codes are deduplicated and sorted, so parse -> filename() -> parse is
    a fixed point.  Errors carry the character index that failed.
    """
    i = 0
    n = len(name)
    if i >= n or not name[i].isalpha():
        raise AnnotationSyntax("expected a concept letter", i)
    letter = name[i]
    i += 1
    modifier = ""
    if i < n and name[i] in "+-":
        modifier = name[i]
        i += 1
    try:
        concept = Concept.parse(letter + modifier)
    except UnknownConcept:
        raise AnnotationSyntax(f"invalid concept {letter + modifier!r}", 0) from None
    if concept.letter not in _GRADEABLE_LETTERS:
        raise AnnotationSyntax(
            f"concept {concept} cannot be assigned to a submission", 0)

    codes = set()
    while i < n and name[i] == ",":
        i += 1
        start = i
        if i >= n or not name[i].isdigit():
            raise AnnotationSyntax("expected an error code", i)
        if name[i] == "0":
            raise AnnotationSyntax("error codes start at 1", i)
        while i < n and name[i].isdigit():
            i += 1
        codes.add(int(name[start:i]))

    if i >= n or name[i] != "_":
        raise AnnotationSyntax("expected ',' or '_'", i)
    i += 1

    dot = name.rfind(".")
    if dot < i:
        raise AnnotationSyntax("expected '.<extension>'", n)
    if dot == i:
        raise AnnotationSyntax("empty student id", i)
    student = name[i:dot]
    extension = name[dot + 1:]
    if not extension:
        raise AnnotationSyntax("empty extension", dot + 1)
    return Annotation(
        concept=concept,
        codes=tuple(sorted(codes)),
        student_id=student,
        extension=extension,
    )


@dataclass(frozen=True)
class SubmissionEntry:
    question: str
    student_id: str
    concept: Concept
    codes: tuple
    path: Path
    mtime: float


@dataclass
class IngestReport:
    entries: list = field(default_factory=list)
    shadowed: list = field(default_factory=list)      # superseded duplicates
    mismatches: list = field(default_factory=list)    # skipped, with reason
    scanned: int = 0

    def for_student(self, student_id: str) -> list:
        return [e for e in self.entries if e.student_id == student_id]


#: root/<question>/<annotation file>
LAYOUT_FLAT = "question"
#: root/<question>/<student>/<annotation file>
LAYOUT_NESTED = "question/student"

_LAYOUTS = (LAYOUT_FLAT, LAYOUT_NESTED)


def ingest_submissions(root, layout: str = LAYOUT_FLAT) -> IngestReport:
    """Scan a grader-maintained tree into structured entries.

    When a (question, student) pair appears more than once, the file with
    the latest modification time wins and the rest are reported as
    shadowed.  Files that do not fit the layout or do not parse are kept
    in `mismatches` with a reason; they never abort the scan.  Every
    scanned file lands in exactly one of the three buckets.
    """
    root = Path(root)
    if layout not in _LAYOUTS:
        raise GradeforgeError(f"unknown layout {layout!r}")
    report = IngestReport()
    best: dict = {}
    files = sorted(p for p in root.rglob("*") if p.is_file())
    if not files:
        raise EmptyRoot(f"no submission files under {root}")
    expected_depth = 2 if layout == LAYOUT_FLAT else 3
    for path in files:
        report.scanned += 1
        relative = path.relative_to(root)
        parts = relative.parts
        if len(parts) != expected_depth:
            report.mismatches.append(
                {"path": str(path), "reason": f"expected layout {layout}"})
            continue
        question = parts[0]
        try:
            annotation = parse_annotation(path.name)
        except AnnotationSyntax as exc:
            report.mismatches.append({"path": str(path), "reason": str(exc)})
            continue
        if layout == LAYOUT_NESTED and parts[1] != annotation.student_id:
            report.mismatches.append(
                {"path": str(path),
                 "reason": f"directory says {parts[1]!r}, "
                           f"name says {annotation.student_id!r}"})
            continue
        entry = SubmissionEntry(
            question=question,
            student_id=annotation.student_id,
            concept=annotation.concept,
            codes=annotation.codes,
            path=path,
            mtime=path.stat().st_mtime,
        )
        key = (question, annotation.student_id)
        if key in best:
            # Latest save wins; equal timestamps fall back to name order.
            held = best[key]
            keep, drop = (entry, held) if (entry.mtime, entry.path.name) > \
                (held.mtime, held.path.name) else (held, entry)
            best[key] = keep
            report.shadowed.append(
                {"path": str(drop.path), "superseded_by": str(keep.path)})
        else:
            best[key] = entry
    report.entries = sorted(
        best.values(), key=lambda e: (e.question, e.student_id))
    return report


@dataclass(frozen=True)
class CheckResult:
    path: str
    ok: bool
    exit_code: int | None
    output: str


#: How much process output a check result retains.
_OUTPUT_TAIL = 2048


def _run_one(path: Path, command: list, timeout: float) -> CheckResult:
    argv = [arg.replace("{file}", str(path)) for arg in command]
    try:
        proc = subprocess.run(
            argv, capture_output=True, timeout=timeout, text=False)
    except FileNotFoundError:
        raise CommandNotFound(f"check command not found: {argv[0]}") from None
    except subprocess.TimeoutExpired:
        return CheckResult(path=str(path), ok=False, exit_code=None,
                           output=f"timed out after {timeout}s")
    blob = (proc.stdout or b"") + (proc.stderr or b"")
    tail = blob[-_OUTPUT_TAIL:].decode("utf-8", errors="replace")
    return CheckResult(path=str(path), ok=proc.returncode == 0,
                       exit_code=proc.returncode, output=tail)


def run_check_command(paths, command: list, timeout: float = 30.0,
                      jobs: int = 1) -> list:
    """Run a sanity command (compiler, linter) over submission files.

    `command` is an argv list; every occurrence of ``{file}`` is replaced
    with the file path.  Results come back in input order regardless of
    `jobs`, so re-running is stable.
    """
    paths = [Path(p) for p in paths]
    if not any("{file}" in part for part in command):
        raise GradeforgeError("check command must reference {file}")
    if jobs <= 1:
        return [_run_one(p, command, timeout) for p in paths]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda p: _run_one(p, command, timeout), paths))


def render_feedback(entries, catalog: dict, assessment: str) -> dict:
    """Per-student feedback documents from entries plus a code catalog.

    Returns ``{student_id: markdown}``.  A code missing from the catalog
    raises UnknownErrorCode naming the student; silent partial feedback
    would hide grading mistakes.
    """
    by_student: dict = {}
    for entry in sorted(entries, key=lambda e: (e.student_id, e.question)):
        by_student.setdefault(entry.student_id, []).append(entry)
    documents = {}
    for student_id, rows in by_student.items():
        lines = [f"# {assessment} feedback for {student_id}", ""]
        for entry in rows:
            lines.append(f"## {entry.question}: {entry.concept}")
            for code in entry.codes:
                if code not in catalog:
                    raise UnknownErrorCode(
                        f"student {student_id}, question {entry.question}: "
                        f"code {code} is not in the catalog")
                lines.append(f"- [{code}] {catalog[code]}")
            lines.append("")
        documents[student_id] = "\n".join(lines).rstrip("\n") + "\n"
    return documents


def export_grades_csv(entries, assessment: str) -> str:
    """Flat CSV of ingested grades, one row per (student, question).

    Rows are sorted and the line terminator is fixed, so equal inputs
    yield byte-equal output.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["student_id", "assessment", "question", "concept",
                     "error_codes"])
    for entry in sorted(entries, key=lambda e: (e.student_id, e.question)):
        writer.writerow([
            entry.student_id,
            assessment,
            entry.question,
            str(entry.concept),
            "|".join(str(c) for c in entry.codes),
        ])
    return buffer.getvalue()


# Similarity screening
# --------------------

_COMMENT_PATTERNS = (
    re.compile(r"/\*.*?\*/", re.DOTALL),
    re.compile(r"//[^\n]*"),
    re.compile(r"#[^\n]*"),
)
_TOKEN = re.compile(r"\w+|[^\w\s]")
_KEYWORDS = frozenset("""
    and as assert break class continue def del elif else except finally for
    from global if import in is lambda nonlocal not or pass raise return
    try while with yield None True False
    auto bool case char const do double enum extern float int long printf
    scanf short signed sizeof static struct switch typedef union unsigned
    void algoritmo declare inicio fim se entao senao fimse para de ate faca
    fimpara enquanto fimenquanto escreva leia inteiro real caractere logico
""".split())


def _tokens(text: str, identifier_agnostic: bool) -> list:
    for pattern in _COMMENT_PATTERNS:
        text = pattern.sub(" ", text)
    tokens = _TOKEN.findall(text)
    if not identifier_agnostic:
        return tokens
    normalized = []
    for token in tokens:
        if token[0].isalpha() or token[0] == "_":
            if token.lower() in _KEYWORDS:
                normalized.append(token.lower())
            else:
                normalized.append("ID")
        else:
            normalized.append(token)
    return normalized


def _shingles(tokens: list, k: int) -> frozenset:
    if not tokens:
        return frozenset()
    if len(tokens) <= k:
        return frozenset([tuple(tokens)])
    return frozenset(tuple(tokens[i:i + k]) for i in range(len(tokens) - k + 1))


def pairwise_similarity(text_a: str, text_b: str, k: int = 5,
                        identifier_agnostic: bool = False) -> float:
    """Jaccard similarity of k-token shingle sets, in [0, 1]."""
    a = _shingles(_tokens(text_a, identifier_agnostic), k)
    b = _shingles(_tokens(text_b, identifier_agnostic), k)
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


@dataclass(frozen=True)
class SimilarityGroup:
    members: tuple
    score: float


@dataclass
class SimilarityReport:
    groups: list
    skipped: list  # binary or undecodable files, by id


def similarity_groups(files: dict, k: int = 5, threshold: float = 0.8,
                      identifier_agnostic: bool = False) -> SimilarityReport:
    """Cluster suspiciously similar submissions.

    `files` maps an id (usually the student) to a path.  Pairs at or above
    `threshold` are linked and connected components of size two or more
    are reported with their strongest internal score.  Binary files are
    skipped, not compared.
    """
    texts = {}
    skipped = []
    for name in sorted(files):
        raw = Path(files[name]).read_bytes()
        if b"\x00" in raw:
            skipped.append(name)
            continue
        try:
            texts[name] = raw.decode("utf-8")
        except UnicodeDecodeError:
            skipped.append(name)
            continue
    names = sorted(texts)
    shingled = {
        name: _shingles(_tokens(texts[name], identifier_agnostic), k)
        for name in names
    }
    parent = {name: name for name in names}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edge_scores: dict = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            sa, sb = shingled[a], shingled[b]
            if not sa and not sb:
                score = 1.0
            elif not sa or not sb:
                score = 0.0
            else:
                score = len(sa & sb) / len(sa | sb)
            if score >= threshold:
                parent[find(a)] = find(b)
                edge_scores[(a, b)] = score

    components: dict = {}
    for name in names:
        components.setdefault(find(name), []).append(name)
    groups = []
    for members in components.values():
        if len(members) < 2:
            continue
        members = tuple(sorted(members))
        best = max(
            score for (a, b), score in edge_scores.items()
            if a in members and b in members
        )
        groups.append(SimilarityGroup(members=members, score=best))
    groups.sort(key=lambda g: g.members)
    return SimilarityReport(groups=groups, skipped=skipped)
