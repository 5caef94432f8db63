/** Draft policy overrides being edited in the console.
 *
 * A draft holds at most four sections, mirroring POST /api/preview: a full
 * replacement of the final cutoff table, a full replacement of the weight
 * map, the two bonus factors, and the recovery policy.  Sections the user
 * has not touched stay absent, so the service keeps the snapshot values.
 *
 * All values are kept as the input strings the user typed; the service owns
 * parsing and validation.  The only arithmetic here is the weight-sum
 * precheck that mirrors the service invariant.
 */

import type { PolicyJson, PreviewRequestBody } from "./types.js";
import { effectiveFinalCutoffs } from "./types.js";

export interface DraftCutoffRow {
  min: string;
  concept: string;
}

export interface DraftBonuses {
  improvement?: string;
  activity?: string;
}

export interface DraftSections {
  cutoffs?: DraftCutoffRow[];
  weights?: Record<string, string>;
  bonuses?: DraftBonuses;
  rec_policy?: string;
}

/* The service checks the exact rational sum against 1 within 1e-9; inputs
   here are decimal strings summed as doubles, so a looser epsilon avoids
   flagging sums that are off only by float rounding.  The service stays
   authoritative: anything that slips through comes back as a 422. */
const WEIGHT_SUM_EPSILON = 1e-6;

export interface WeightCheck {
  ok: boolean;
  sum: number;
  message: string | null;
}

export class PolicyDraft {
  cutoffs?: DraftCutoffRow[];
  weights?: Record<string, string>;
  bonuses?: DraftBonuses;
  rec_policy?: string;

  constructor(sections: DraftSections = {}) {
    if (sections.cutoffs !== undefined) {
      this.cutoffs = sections.cutoffs.map((row) => ({ ...row }));
    }
    if (sections.weights !== undefined) {
      this.weights = { ...sections.weights };
    }
    if (sections.bonuses !== undefined) {
      this.bonuses = { ...sections.bonuses };
    }
    if (sections.rec_policy !== undefined) {
      this.rec_policy = sections.rec_policy;
    }
  }

  isEmpty(): boolean {
    return (
      this.cutoffs === undefined &&
      this.weights === undefined &&
      this.bonuses === undefined &&
      this.rec_policy === undefined
    );
  }

  /** Drop sections whose values match the policy, so putting a control back
   * where it started leaves a clean draft. */
  normalized(policy: PolicyJson): PolicyDraft {
    const pruned = new PolicyDraft(this);
    if (pruned.cutoffs !== undefined && cutoffsEqualPolicy(pruned.cutoffs, policy)) {
      delete pruned.cutoffs;
    }
    if (pruned.weights !== undefined && weightsEqualPolicy(pruned.weights, policy)) {
      delete pruned.weights;
    }
    if (pruned.bonuses !== undefined && bonusesEqualPolicy(pruned.bonuses, policy)) {
      delete pruned.bonuses;
    }
    if (pruned.rec_policy !== undefined && pruned.rec_policy === policy.rec_policy) {
      delete pruned.rec_policy;
    }
    return pruned;
  }

  dirtyAgainst(policy: PolicyJson): boolean {
    return !this.normalized(policy).isEmpty();
  }

  /** Request body for /api/preview, with sections equal to the policy
   * dropped.  Values go over the wire as the strings the user typed. */
  toRequestBody(policy: PolicyJson): PreviewRequestBody {
    const pruned = this.normalized(policy);
    const body: PreviewRequestBody = {};
    if (pruned.cutoffs !== undefined) {
      body.cutoffs = pruned.cutoffs.map((row) => ({
        min: row.min,
        concept: row.concept,
      }));
    }
    if (pruned.weights !== undefined) {
      body.weights = { ...pruned.weights };
    }
    if (pruned.bonuses !== undefined) {
      const bonuses: { improvement_factor?: string; activity_factor?: string } = {};
      if (pruned.bonuses.improvement !== undefined) {
        bonuses.improvement_factor = pruned.bonuses.improvement;
      }
      if (pruned.bonuses.activity !== undefined) {
        bonuses.activity_factor = pruned.bonuses.activity;
      }
      body.bonuses = bonuses;
    }
    if (pruned.rec_policy !== undefined) {
      body.rec_policy = pruned.rec_policy;
    }
    return body;
  }

  /** Client-side mirror of the weight-sum invariant; when it fails the
   * console shows the message inline and sends nothing. */
  checkWeights(): WeightCheck {
    if (this.weights === undefined) {
      return { ok: true, sum: 1, message: null };
    }
    let sum = 0;
    for (const value of Object.values(this.weights)) {
      const parsed = Number(value);
      if (!Number.isFinite(parsed)) {
        return { ok: false, sum: NaN, message: `weight ${value!} is not a number` };
      }
      sum += parsed;
    }
    if (Math.abs(sum - 1) > WEIGHT_SUM_EPSILON) {
      const rendered = Number(sum.toFixed(6));
      return {
        ok: false,
        sum,
        message: `weights sum to ${rendered}, expected 1`,
      };
    }
    return { ok: true, sum, message: null };
  }

  toStorage(): string {
    const sections: DraftSections = {};
    if (this.cutoffs !== undefined) sections.cutoffs = this.cutoffs;
    if (this.weights !== undefined) sections.weights = this.weights;
    if (this.bonuses !== undefined) sections.bonuses = this.bonuses;
    if (this.rec_policy !== undefined) sections.rec_policy = this.rec_policy;
    return JSON.stringify(sections);
  }

  static fromStorage(text: string): PolicyDraft | null {
    try {
      const parsed = JSON.parse(text) as DraftSections;
      if (typeof parsed !== "object" || parsed === null) return null;
      return new PolicyDraft(parsed);
    } catch {
      return null;
    }
  }

  /** Working copy of the final cutoff table: the draft's rows when the user
   * has touched them, else the policy's effective table. */
  workingCutoffs(policy: PolicyJson): DraftCutoffRow[] {
    if (this.cutoffs !== undefined) {
      return this.cutoffs.map((row) => ({ ...row }));
    }
    return effectiveFinalCutoffs(policy).map((row) => ({
      min: String(row.min),
      concept: row.concept,
    }));
  }

  /** Working copy of the weight map, as input strings. */
  workingWeights(policy: PolicyJson): Record<string, string> {
    if (this.weights !== undefined) {
      return { ...this.weights };
    }
    const weights: Record<string, string> = {};
    for (const [name, value] of Object.entries(policy.weights)) {
      weights[name] = String(value);
    }
    return weights;
  }

  workingBonuses(policy: PolicyJson): { improvement: string; activity: string } {
    return {
      improvement:
        this.bonuses?.improvement ?? String(policy.improvement_bonus_factor),
      activity: this.bonuses?.activity ?? String(policy.activity_bonus_factor),
    };
  }

  workingRecPolicy(policy: PolicyJson): string {
    return this.rec_policy ?? policy.rec_policy;
  }
}

function numbersEqual(a: string, b: number | string): boolean {
  return Number(a) === Number(b);
}

function cutoffsEqualPolicy(rows: DraftCutoffRow[], policy: PolicyJson): boolean {
  const effective = effectiveFinalCutoffs(policy);
  if (rows.length !== effective.length) return false;
  return rows.every((row, i) => {
    const base = effective[i]!;
    return row.concept === base.concept && numbersEqual(row.min, base.min);
  });
}

function weightsEqualPolicy(
  weights: Record<string, string>,
  policy: PolicyJson,
): boolean {
  const names = Object.keys(policy.weights);
  if (Object.keys(weights).length !== names.length) return false;
  return names.every((name) => {
    const edited = weights[name];
    return edited !== undefined && numbersEqual(edited, policy.weights[name]!);
  });
}

function bonusesEqualPolicy(bonuses: DraftBonuses, policy: PolicyJson): boolean {
  if (
    bonuses.improvement !== undefined &&
    !numbersEqual(bonuses.improvement, policy.improvement_bonus_factor)
  ) {
    return false;
  }
  if (
    bonuses.activity !== undefined &&
    !numbersEqual(bonuses.activity, policy.activity_bonus_factor)
  ) {
    return false;
  }
  return true;
}
