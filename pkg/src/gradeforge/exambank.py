"""Question banks and individualized exam generation.

Dissertative questions carry four or five interchangeable variants; exams
are assembled per student by drawing one question per template slot and
spreading the variants over the roster.  The draw is a pure function of
(seed, bank content, sorted roster), so regenerating an exam session is
byte-for-byte reproducible.

Variant spread guarantees, per question:

* balance: usage counts never differ by more than one at any roster prefix;
* coverage: with at least as many students as variants, every variant is used;
* spread: full-exam variant tuples are not repeated while unused
  combinations remain.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import GradeforgeError
from .scale import as_fraction

DIFFICULTIES = ("simple", "medium", "complex")

DISSERTATIVE = "dissertative"
MULTIPLE_CHOICE = "multiple_choice"

#: Allowed variant counts for dissertative questions.
MIN_VARIANTS, MAX_VARIANTS = 4, 5


class ParseError(GradeforgeError):
    """A bank file could not be parsed; carries line and position."""

    def __init__(self, message: str, line: int | None = None,
                 position: int | None = None):
        super().__init__(message)
        self.line = line
        self.position = position


class MissingDifficulty(GradeforgeError):
    """No unused dissertative question of the requested difficulty."""


class InsufficientBank(GradeforgeError):
    """Not enough multiple-choice questions of the requested difficulty."""


class DanglingReference(GradeforgeError):
    """An exam references a question or variant the bank does not contain."""


@dataclass(frozen=True)
class Variant:
    id: str
    statement: str
    answer_key: str


@dataclass(frozen=True)
class Question:
    id: str
    topic: str
    difficulty: str
    kind: str = DISSERTATIVE
    weight: Fraction | None = None
    variants: tuple = ()
    statement: str = ""          # multiple choice only
    options: tuple = ()          # multiple choice only
    answer_index: int = 0        # index of the correct option


@dataclass(frozen=True)
class QuestionBank:
    questions: tuple
    content_hash: str

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {q.id: q for q in self.questions})

    def question(self, question_id: str) -> Question:
        try:
            return self._by_id[question_id]
        except KeyError:
            raise DanglingReference(f"unknown question {question_id!r}") from None

    def dissertative(self, difficulty: str | None = None) -> list:
        return [
            q for q in self.questions
            if q.kind == DISSERTATIVE
            and (difficulty is None or q.difficulty == difficulty)
        ]

    def multiple_choice(self, difficulty: str | None = None) -> list:
        return [
            q for q in self.questions
            if q.kind == MULTIPLE_CHOICE
            and (difficulty is None or q.difficulty == difficulty)
        ]


def bank_from_dict(data: dict) -> QuestionBank:
    """Build a bank from parsed JSON; the hash covers the canonical form."""
    questions = []
    for raw in data.get("questions", []):
        variants = tuple(
            Variant(id=v["id"], statement=v.get("statement", ""),
                    answer_key=v.get("answer_key", ""))
            for v in raw.get("variants", [])
        )
        weight = raw.get("weight")
        questions.append(
            Question(
                id=str(raw["id"]),
                topic=raw.get("topic", ""),
                difficulty=raw.get("difficulty", ""),
                kind=raw.get("kind", DISSERTATIVE),
                weight=None if weight is None else as_fraction(weight),
                variants=variants,
                statement=raw.get("statement", ""),
                options=tuple(raw.get("options", [])),
                answer_index=int(raw.get("answer_index", 0)),
            )
        )
    canonical = json.dumps(data, sort_keys=True, default=str).encode()
    digest = hashlib.sha256(canonical).hexdigest()
    return QuestionBank(questions=tuple(questions), content_hash=digest)


def load_bank(path) -> QuestionBank:
    """Read a bank JSON file.  Malformed input raises ParseError with
    the line and column reported by the JSON parser."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}",
            line=exc.lineno,
            position=exc.colno,
        ) from None
    if not isinstance(data, dict) or not isinstance(data.get("questions"), list):
        raise ParseError(f"{path}: expected an object with a 'questions' list")
    bank = bank_from_dict(data)
    # Hash the bytes on disk, not the reparse, so unrelated formatting
    # changes are visible to the determinism contract.
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return QuestionBank(questions=bank.questions, content_hash=digest)


def validate_bank(bank: QuestionBank) -> list:
    """Structural findings; an empty list means the bank is usable."""
    findings = []
    seen = set()
    for question in bank.questions:
        where = f"question {question.id}"
        if question.id in seen:
            findings.append({"question": question.id, "message": "duplicate question id"})
        seen.add(question.id)
        if question.difficulty not in DIFFICULTIES:
            findings.append(
                {"question": question.id,
                 "message": f"unknown difficulty {question.difficulty!r}"}
            )
        if question.kind == DISSERTATIVE:
            count = len(question.variants)
            if not MIN_VARIANTS <= count <= MAX_VARIANTS:
                findings.append(
                    {"question": question.id,
                     "message": f"{count} variants, expected "
                                f"{MIN_VARIANTS} to {MAX_VARIANTS}"}
                )
            variant_ids = [v.id for v in question.variants]
            if len(set(variant_ids)) != len(variant_ids):
                findings.append(
                    {"question": question.id, "message": "duplicate variant id"}
                )
        elif question.kind == MULTIPLE_CHOICE:
            if len(question.options) < 2:
                findings.append(
                    {"question": question.id, "message": "fewer than two options"}
                )
            elif not 0 <= question.answer_index < len(question.options):
                findings.append(
                    {"question": question.id, "message": "answer index out of range"}
                )
        else:
            findings.append(
                {"question": question.id, "message": f"unknown kind {question.kind!r}"}
            )
    return findings


@dataclass(frozen=True)
class TemplateSlot:
    difficulty: str
    weight: Fraction


@dataclass(frozen=True)
class ExamTemplate:
    """Shape of one exam: ordered slots plus an optional multiple-choice block."""

    assessment: str
    slots: tuple
    mc_counts: dict = field(default_factory=dict)
    mc_weight: Fraction = Fraction(0)

    def __post_init__(self):
        total = sum((s.weight for s in self.slots), Fraction(0)) + self.mc_weight
        if abs(total - 1) > Fraction(1, 10**9):
            raise GradeforgeError(
                f"template {self.assessment}: slot weights sum to {total}"
            )

    @classmethod
    def from_dict(cls, assessment: str, data: dict) -> "ExamTemplate":
        slots = tuple(
            TemplateSlot(difficulty=s["difficulty"], weight=as_fraction(s["weight"]))
            for s in data.get("slots", [])
        )
        mc = data.get("mc_block") or {}
        return cls(
            assessment=assessment,
            slots=slots,
            mc_counts={k: int(v) for k, v in (mc.get("counts") or {}).items()},
            mc_weight=as_fraction(mc.get("weight", 0)),
        )

    def to_dict(self) -> dict:
        def number(value: Fraction):
            return int(value) if value.denominator == 1 else float(value)

        data = {
            "slots": [
                {"difficulty": s.difficulty, "weight": number(s.weight)}
                for s in self.slots
            ]
        }
        if self.mc_counts:
            data["mc_block"] = {
                "counts": dict(self.mc_counts),
                "weight": number(self.mc_weight),
            }
        return data


def default_template(assessment: str) -> ExamTemplate:
    """One question of each difficulty, weighted 25/35/40."""
    return ExamTemplate(
        assessment=assessment,
        slots=(
            TemplateSlot("simple", Fraction(1, 4)),
            TemplateSlot("medium", Fraction(7, 20)),
            TemplateSlot("complex", Fraction(2, 5)),
        ),
    )


@dataclass(frozen=True)
class GeneratedExam:
    student_id: str
    assessment: str
    assignments: tuple       # ((question_id, variant_id), ...)
    mc_items: tuple = ()     # ((question_id, option_order), ...)
    barcode_payload: str = ""
    doc_ref: str | None = None


def barcode_payload(student_id: str) -> str:
    """Digits of the registration id, which is what the scanner encodes."""
    return "".join(ch for ch in student_id if ch.isdigit())


def _derive_rng(*parts) -> random.Random:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _spread_variants(variant_counts, order, rng):
    """Assign one variant index per slot to each position in `order`.

    Position m takes, in each slot of variant count v, the value
    (m + d) mod v where d is a higher base-v digit of m; a seeded
    relabelling of each slot's variants makes different seeds produce
    different exams.  Each slot cycles through its variants round-robin,
    so usage counts stay within one of each other at every prefix and
    all variants appear once the roster reaches the variant count.
    Slots with coprime counts combine independently, so full tuples do
    not repeat until every combination has been used.
    """
    relabel = [rng.sample(range(v), v) for v in variant_counts]
    by_count: dict = {}
    for slot, v in enumerate(variant_counts):
        by_count.setdefault(v, []).append(slot)
    result = []
    for m in range(len(order)):
        pick = [0] * len(variant_counts)
        for v, slots in by_count.items():
            base = m % v
            for t, slot in enumerate(slots):
                digit = (m // v**t) % v if t else 0
                pick[slot] = relabel[slot][(base + digit) % v]
        result.append(tuple(pick))
    return result


def assign_variants(roster, template: ExamTemplate, bank: QuestionBank,
                    seed: int) -> list:
    """Build one exam per student, deterministically.

    The same (seed, bank, roster) always produces the same exams; roster
    order does not matter because it is sorted before anything random
    happens.
    """
    students = sorted(roster)
    if len(set(students)) != len(students):
        raise GradeforgeError("roster contains duplicate student ids")
    rng = _derive_rng(seed, bank.content_hash, template.assessment, ",".join(students))

    chosen = []
    taken = set()
    for slot in template.slots:
        candidates = sorted(
            (q for q in bank.dissertative(slot.difficulty) if q.id not in taken),
            key=lambda q: q.id,
        )
        if not candidates:
            raise MissingDifficulty(
                f"no unused {slot.difficulty} question available"
            )
        question = candidates[rng.randrange(len(candidates))]
        taken.add(question.id)
        chosen.append(question)

    order = students[:]
    rng.shuffle(order)
    spread = _spread_variants([len(q.variants) for q in chosen], order, rng)

    by_student = {}
    for student, indices in zip(order, spread):
        by_student[student] = tuple(
            (question.id, question.variants[index].id)
            for question, index in zip(chosen, indices)
        )

    exams = []
    for student in students:
        mc_items = ()
        if template.mc_counts:
            mc_items = tuple(
                sample_mc_block(bank, template.mc_counts, seed, student)
            )
        exams.append(
            GeneratedExam(
                student_id=student,
                assessment=template.assessment,
                assignments=by_student[student],
                mc_items=mc_items,
                barcode_payload=barcode_payload(student),
            )
        )
    return exams


def sample_mc_block(bank: QuestionBank, counts: dict, seed: int,
                    student_id: str) -> list:
    """Per-student multiple-choice draw: question sample plus option order.

    Deterministic per (seed, bank, student); different students may and
    usually do receive different questions.
    """
    rng = _derive_rng(seed, bank.content_hash, "mc", student_id)
    items = []
    for difficulty in DIFFICULTIES:
        wanted = int(counts.get(difficulty, 0))
        if wanted == 0:
            continue
        available = sorted(bank.multiple_choice(difficulty), key=lambda q: q.id)
        if wanted > len(available):
            raise InsufficientBank(
                f"need {wanted} {difficulty} multiple-choice questions, "
                f"bank has {len(available)}"
            )
        for question in sorted(rng.sample(available, wanted), key=lambda q: q.id):
            option_order = list(range(len(question.options)))
            rng.shuffle(option_order)
            items.append((question.id, tuple(option_order)))
    return items


# Rendering
# ---------

_LATEX_SPECIALS = {
    "\\": r"\textbackslash{}", "&": r"\&", "%": r"\%", "$": r"\$",
    "#": r"\#", "_": r"\_", "{": r"\{", "}": r"\}",
    "~": r"\textasciitilde{}", "^": r"\textasciicircum{}",
}


def _latex_escape(text: str) -> str:
    return "".join(_LATEX_SPECIALS.get(ch, ch) for ch in text)


def _percent(weight: Fraction) -> str:
    value = weight * 100
    if value.denominator == 1:
        return f"{int(value)}%"
    return f"{float(value):g}%"


def _option_letter(index: int) -> str:
    return chr(ord("a") + index)


def _exam_parts(exam: GeneratedExam, bank: QuestionBank,
                template: ExamTemplate | None):
    """Resolve assignments against the bank, checking references."""
    resolved = []
    weights = list(template.slots) if template is not None else [None] * len(exam.assignments)
    if template is not None and len(template.slots) != len(exam.assignments):
        weights = [None] * len(exam.assignments)
    for (question_id, variant_id), slot in zip(exam.assignments, weights):
        question = bank.question(question_id)
        variant = next((v for v in question.variants if v.id == variant_id), None)
        if variant is None:
            raise DanglingReference(
                f"question {question_id} has no variant {variant_id!r}"
            )
        resolved.append((question, variant, None if slot is None else slot.weight))
    mc_resolved = []
    for question_id, option_order in exam.mc_items:
        question = bank.question(question_id)
        for index in option_order:
            if not 0 <= index < len(question.options):
                raise DanglingReference(
                    f"question {question_id} has no option {index}"
                )
        mc_resolved.append((question, option_order))
    return resolved, mc_resolved


def render_exam(exam: GeneratedExam, bank: QuestionBank,
                fmt: str = "markdown",
                template: ExamTemplate | None = None) -> str:
    """Render one student's exam as markdown or latex_source."""
    resolved, mc_resolved = _exam_parts(exam, bank, template)
    if fmt == "markdown":
        lines = [f"# {exam.assessment}", ""]
        lines += [f"Student: {exam.student_id}", "",
                  f"{{{{barcode:{exam.barcode_payload}}}}}", ""]
        for number, (question, variant, weight) in enumerate(resolved, start=1):
            heading = f"## Question {number}"
            if weight is not None:
                heading += f" ({_percent(weight)})"
            lines += [heading, "", variant.statement, ""]
        if mc_resolved:
            lines += ["## Multiple choice", ""]
            for number, (question, option_order) in enumerate(mc_resolved, start=1):
                lines += [f"{number}. {question.statement}"]
                for position, index in enumerate(option_order):
                    lines.append(
                        f"   {_option_letter(position)}) {question.options[index]}"
                    )
                lines.append("")
        return "\n".join(lines).rstrip("\n") + "\n"
    if fmt == "latex_source":
        lines = [
            r"\documentclass{article}",
            r"\begin{document}",
            rf"\section*{{{_latex_escape(exam.assessment)}}}",
            rf"Student: {_latex_escape(exam.student_id)}\\",
            rf"\texttt{{{{{{barcode:{exam.barcode_payload}}}}}}}",
        ]
        for number, (question, variant, weight) in enumerate(resolved, start=1):
            title = f"Question {number}"
            if weight is not None:
                title += f" ({_percent(weight)})"
            lines += [rf"\subsection*{{{_latex_escape(title)}}}",
                      _latex_escape(variant.statement)]
        if mc_resolved:
            lines.append(r"\subsection*{Multiple choice}")
            lines.append(r"\begin{enumerate}")
            for question, option_order in mc_resolved:
                lines.append(rf"\item {_latex_escape(question.statement)}")
                lines.append(r"\begin{itemize}")
                for position, index in enumerate(option_order):
                    lines.append(
                        rf"\item[{_option_letter(position)})] "
                        + _latex_escape(question.options[index])
                    )
                lines.append(r"\end{itemize}")
            lines.append(r"\end{enumerate}")
        lines.append(r"\end{document}")
        return "\n".join(lines) + "\n"
    raise GradeforgeError(f"unknown format {fmt!r}")


def render_answer_key(exam: GeneratedExam, bank: QuestionBank,
                      fmt: str = "markdown",
                      template: ExamTemplate | None = None) -> str:
    """Companion document with the expected answers for one exam."""
    resolved, mc_resolved = _exam_parts(exam, bank, template)
    if fmt == "markdown":
        lines = [f"# {exam.assessment} answer key", "",
                 f"Student: {exam.student_id}", ""]
        for number, (question, variant, _) in enumerate(resolved, start=1):
            lines += [f"## Question {number} ({question.id}/{variant.id})", "",
                      variant.answer_key, ""]
        if mc_resolved:
            lines += ["## Multiple choice", ""]
            for number, (question, option_order) in enumerate(mc_resolved, start=1):
                position = option_order.index(question.answer_index)
                lines.append(f"{number}. {_option_letter(position)} ({question.id})")
            lines.append("")
        return "\n".join(lines).rstrip("\n") + "\n"
    if fmt == "latex_source":
        lines = [
            r"\documentclass{article}",
            r"\begin{document}",
            rf"\section*{{{_latex_escape(exam.assessment + ' answer key')}}}",
            rf"Student: {_latex_escape(exam.student_id)}\\",
        ]
        for number, (question, variant, _) in enumerate(resolved, start=1):
            lines += [rf"\subsection*{{Question {number}}}",
                      _latex_escape(variant.answer_key)]
        for question, option_order in mc_resolved:
            position = option_order.index(question.answer_index)
            lines.append(
                rf"\par {_latex_escape(question.id)}: {_option_letter(position)}"
            )
        lines.append(r"\end{document}")
        return "\n".join(lines) + "\n"
    raise GradeforgeError(f"unknown format {fmt!r}")


def exam_manifest(template: ExamTemplate, bank: QuestionBank, seed: int,
                  exams, fmt: str = "markdown") -> dict:
    """Manifest describing a generated session; contains no timestamps so
    regenerating with the same inputs is byte-identical."""
    return {
        "schema": 1,
        "assessment": template.assessment,
        "seed": seed,
        "bank_hash": bank.content_hash,
        "format": fmt,
        "template": template.to_dict(),
        "exams": [
            {
                "student_id": exam.student_id,
                "barcode": exam.barcode_payload,
                "assignments": [list(pair) for pair in exam.assignments],
                "mc": [[qid, list(order)] for qid, order in exam.mc_items],
            }
            for exam in sorted(exams, key=lambda e: e.student_id)
        ],
    }
