/** Builders for service response shapes used by the unit tests. */

import type {
  Distribution,
  OutcomeJson,
  PolicyJson,
  SnapshotResponse,
} from "../../src/types.js";

export const DEFAULT_CUTOFF_ROWS = [
  { min: 0, concept: "F" },
  { min: 0.8, concept: "D-" },
  { min: 1, concept: "D" },
  { min: 1.5, concept: "D+" },
  { min: 1.8, concept: "C-" },
  { min: 2, concept: "C" },
  { min: 2.5, concept: "C+" },
  { min: 2.8, concept: "B-" },
  { min: 3, concept: "B" },
  { min: 3.4, concept: "B+" },
  { min: 3.75, concept: "A-" },
  { min: 3.9, concept: "A" },
];

export function makePolicy(overrides: Partial<PolicyJson> = {}): PolicyJson {
  return {
    scale: { scheme: "table2", cutoffs: DEFAULT_CUTOFF_ROWS.map((row) => ({ ...row })) },
    weights: { Exam1: 0.3, Activities: 0.15, Project: 0.15, Exam2: 0.4 },
    question_weights: {},
    attendance_min_fraction: 0.75,
    attendance_failure_concept: "F",
    language_cap: "B",
    rec_policy: "max_of",
    rec_eligibility: "final_D_or_F",
    sub_policy: "separate_sub_exam",
    improvement_bonus_factor: 0.1,
    activity_bonus_factor: 0.2,
    bonus_stage: "pre_cutoff",
    rec_after_attendance_failure: true,
    cutoff_overrides: {},
    ...overrides,
  };
}

export interface OutcomeSeed {
  id: string;
  cr: string;
  final: string;
  registered?: string;
  concepts?: Record<string, string>;
  rec?: string | null;
}

export function makeOutcome(seed: OutcomeSeed): OutcomeJson {
  const concepts = seed.concepts ?? {
    Exam1: "C",
    Activities: "C",
    Project: "C",
    Exam2: "C",
  };
  const assessments: OutcomeJson["assessments"] = {};
  for (const [name, concept] of Object.entries(concepts)) {
    assessments[name] = { score: "0.00", concept };
  }
  return {
    student_id: seed.id,
    assessments,
    cr: seed.cr,
    cbrec: seed.final,
    rec: seed.rec ?? null,
    bonuses: [],
    final_score: seed.cr,
    final_concept: seed.final,
    registered: seed.registered ?? seed.final.charAt(0),
  };
}

export function makeSnapshot(
  outcomes: OutcomeJson[],
  distribution: Distribution,
  options: { snapshotId?: number; schema?: number; policy?: PolicyJson } = {},
): SnapshotResponse {
  return {
    schema: options.schema ?? 1,
    snapshot_id: options.snapshotId ?? 1,
    term: "2017.2",
    produced_at: "2017-09-01T00:00:00+00:00",
    policy: options.policy ?? makePolicy(),
    distribution,
    students: outcomes.map((outcome) => ({ record: {}, outcome })),
  };
}

/** Five-student cohort with one CR tie (s2/s3 both 2.00). */
export function smallCohort(): OutcomeJson[] {
  return [
    makeOutcome({ id: "s3", cr: "2.00", final: "C" }),
    makeOutcome({ id: "s1", cr: "3.45", final: "B+" }),
    makeOutcome({ id: "s2", cr: "2.00", final: "C" }),
    makeOutcome({ id: "s5", cr: "0.40", final: "F" }),
    makeOutcome({ id: "s4", cr: "3.00", final: "B" }),
  ];
}

export const SMALL_DISTRIBUTION: Distribution = {
  A: 0,
  B: 0.4,
  C: 0.4,
  D: 0,
  "F+O": 0.2,
};
