/** Wire types for the calibration service JSON endpoints.
 *
 * These mirror docs/api.md field for field.  The console never computes
 * grades from these shapes; it only displays them.
 */

export const SCHEMA_VERSION = 1;

export const BUCKETS = ["A", "B", "C", "D", "F+O"] as const;
export type Bucket = (typeof BUCKETS)[number];

/** Concept share per bucket, as fractions of the registered cohort. */
export type Distribution = Record<string, number>;

export interface GradedAssessment {
  score: string;
  concept: string;
}

export interface OutcomeJson {
  student_id: string;
  assessments: Record<string, GradedAssessment | null>;
  cr: string;
  cbrec: string;
  rec: string | null;
  bonuses: { name: string; amount: string }[];
  final_score: string;
  final_concept: string;
  registered: string;
}

export interface CutoffRowJson {
  min: number | string;
  concept: string;
  percent?: number | string | null;
}

export interface ScaleJson {
  scheme: string;
  cutoffs: CutoffRowJson[];
}

export interface PolicyJson {
  scale: ScaleJson;
  weights: Record<string, number>;
  question_weights: Record<string, number[]>;
  attendance_min_fraction: number;
  attendance_failure_concept: string;
  language_cap: string | null;
  rec_policy: string;
  rec_eligibility: string;
  sub_policy: string;
  improvement_bonus_factor: number;
  activity_bonus_factor: number;
  bonus_stage: string;
  rec_after_attendance_failure: boolean;
  cutoff_overrides: Record<string, CutoffRowJson[]>;
}

export interface SnapshotStudent {
  record: Record<string, unknown>;
  outcome: OutcomeJson;
}

export interface SnapshotResponse {
  schema: number;
  snapshot_id: number;
  term: string;
  produced_at: string;
  policy: PolicyJson;
  distribution: Distribution;
  students: SnapshotStudent[];
}

export interface Delta {
  student_id: string;
  before: string;
  after: string;
  cr: string;
}

export interface PreviewResponse {
  schema: number;
  snapshot_id: number;
  outcomes: OutcomeJson[];
  distribution: Distribution;
  deltas: Delta[];
}

export interface AuditFinding {
  higher_id: string;
  lower_id: string;
  cr_gap: string;
  final_gap: string;
  explanation: string;
}

export interface AuditResponse {
  schema: number;
  snapshot_id: number;
  draft_applied: boolean;
  findings: AuditFinding[];
}

export interface PersistResponse {
  schema: number;
  snapshot_id: number;
}

/** Overrides accepted by POST /api/preview; omitted sections keep the
 * snapshot policy's values. */
export interface PreviewRequestBody {
  cutoffs?: { min: number | string; concept: string }[];
  weights?: Record<string, number | string>;
  bonuses?: {
    improvement_factor?: number | string;
    activity_factor?: number | string;
  };
  rec_policy?: string;
}

export interface PolicyRequestBody extends PreviewRequestBody {
  snapshot_id: number;
}

/** Effective final cutoff table: the override when present, else the
 * scale's base table.  Pure shape selection, no arithmetic. */
export function effectiveFinalCutoffs(policy: PolicyJson): CutoffRowJson[] {
  const override = policy.cutoff_overrides["final"];
  return override !== undefined ? override : policy.scale.cutoffs;
}

export function bucketOf(registered: string): Bucket {
  const letter = registered.charAt(0);
  if (letter === "A" || letter === "B" || letter === "C" || letter === "D") {
    return letter;
  }
  return "F+O";
}
