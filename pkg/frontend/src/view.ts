/** View model and HTML rendering.
 *
 * buildViewModel distills the store into plain display data; render turns
 * that into markup.  Neither computes grades: rows, concepts, and the
 * distribution are taken verbatim from the service responses.  The only
 * numbers produced here are display artifacts (percent labels, the
 * borderline proximity test on already-rendered CR strings).
 */

import type { PolicyDraft } from "./draft.js";
import type { ConsoleStore } from "./state.js";
import type {
  AuditFinding,
  Delta,
  Distribution,
  OutcomeJson,
  PolicyJson,
} from "./types.js";
import { BUCKETS } from "./types.js";

/** Values documented for rec_policy in the service API. */
export const REC_POLICY_OPTIONS = [
  "replace",
  "max_of",
  "mean_of",
  "open_rec_max",
] as const;

export interface RowView {
  id: string;
  concepts: (string | null)[];
  cr: string;
  cbrec: string;
  rec: string | null;
  final: string;
  registered: string;
  changed: { before: string; after: string } | null;
  nearCutoff: { concept: string; min: string } | null;
}

export interface BarSegment {
  bucket: string;
  share: number;
  label: string;
}

export interface ControlsView {
  disabled: boolean;
  weights: { name: string; value: string }[];
  cutoffs: { index: number; concept: string; min: string }[];
  improvement: string;
  activity: string;
  recPolicy: string;
  recPolicyOptions: readonly string[];
  borderlineBand: number;
}

export interface ViewModel {
  status: string;
  loadError: string | null;
  emptyState: boolean;
  term: string;
  snapshotId: number | null;
  assessmentNames: string[];
  rows: RowView[];
  distribution: BarSegment[];
  deltas: Delta[];
  auditFindings: AuditFinding[];
  auditDraftApplied: boolean;
  controls: ControlsView | null;
  dirty: boolean;
  canPersist: boolean;
  previewPending: boolean;
  previewError: string | null;
  persistError: string | null;
  stale: { currentSnapshotId: number | null; detail: string } | null;
  savedSnapshotId: number | null;
}

export function buildViewModel(store: ConsoleStore): ViewModel {
  const snapshot = store.snapshot;
  if (store.status !== "ready" || snapshot === null) {
    return {
      status: store.status,
      loadError: store.loadError,
      emptyState: false,
      term: "",
      snapshotId: null,
      assessmentNames: [],
      rows: [],
      distribution: [],
      deltas: [],
      auditFindings: [],
      auditDraftApplied: false,
      controls: null,
      dirty: false,
      canPersist: false,
      previewPending: false,
      previewError: null,
      persistError: null,
      stale: null,
      savedSnapshotId: null,
    };
  }

  const empty = snapshot.students.length === 0;
  const assessmentNames = Object.keys(snapshot.policy.weights);
  const outcomes =
    store.preview !== null
      ? store.preview.outcomes
      : snapshot.students.map((student) => student.outcome);
  const deltas = store.preview !== null ? store.preview.deltas : [];
  const distribution =
    store.preview !== null ? store.preview.distribution : snapshot.distribution;

  return {
    status: store.status,
    loadError: null,
    emptyState: empty,
    term: snapshot.term,
    snapshotId: snapshot.snapshot_id,
    assessmentNames,
    rows: buildRows(
      outcomes,
      assessmentNames,
      deltas,
      store.draft,
      snapshot.policy,
      store.borderlineBand,
    ),
    distribution: buildBar(distribution),
    deltas,
    auditFindings: store.auditFindings,
    auditDraftApplied: store.auditDraftApplied,
    controls: empty
      ? { ...buildControls(store.draft, snapshot.policy, store.borderlineBand), disabled: true }
      : buildControls(store.draft, snapshot.policy, store.borderlineBand),
    dirty: store.dirty,
    canPersist: store.canPersist,
    previewPending: store.previewPending,
    previewError: store.previewError,
    persistError: store.persistError,
    stale: store.stale,
    savedSnapshotId: store.savedSnapshotId,
  };
}

/** Rows sorted by CR descending; equal CRs order by student id. */
function buildRows(
  outcomes: OutcomeJson[],
  assessmentNames: string[],
  deltas: Delta[],
  draft: PolicyDraft,
  policy: PolicyJson,
  band: number,
): RowView[] {
  const changedBy = new Map<string, Delta>();
  for (const delta of deltas) changedBy.set(delta.student_id, delta);
  const boundaries = draft
    .workingCutoffs(policy)
    .map((row) => ({ concept: row.concept, min: row.min, value: Number(row.min) }))
    .filter((row) => Number.isFinite(row.value));

  const rows = outcomes.map((outcome) => {
    const delta = changedBy.get(outcome.student_id);
    return {
      id: outcome.student_id,
      concepts: assessmentNames.map((name) => {
        const graded = outcome.assessments[name];
        return graded === null || graded === undefined ? null : graded.concept;
      }),
      cr: outcome.cr,
      cbrec: outcome.cbrec,
      rec: outcome.rec,
      final: outcome.final_concept,
      registered: outcome.registered,
      changed: delta === undefined ? null : { before: delta.before, after: delta.after },
      nearCutoff: nearestBoundary(outcome.cr, boundaries, band),
    };
  });
  rows.sort((a, b) => {
    const byCr = Number(b.cr) - Number(a.cr);
    if (byCr !== 0) return byCr;
    return a.id < b.id ? -1 : a.id > b.id ? 1 : 0;
  });
  return rows;
}

function nearestBoundary(
  cr: string,
  boundaries: { concept: string; min: string; value: number }[],
  band: number,
): { concept: string; min: string } | null {
  const value = Number(cr);
  if (!Number.isFinite(value)) return null;
  let best: { concept: string; min: string } | null = null;
  let bestGap = Infinity;
  for (const boundary of boundaries) {
    if (boundary.value === 0) continue; // every scale starts at 0
    const gap = Math.abs(value - boundary.value);
    if (gap <= band + 1e-9 && gap < bestGap) {
      best = { concept: boundary.concept, min: boundary.min };
      bestGap = gap;
    }
  }
  return best;
}

/** Bar segments carry the service's shares untouched; the label is a
 * display rendering, the share itself feeds widths and tests. */
function buildBar(distribution: Distribution): BarSegment[] {
  return BUCKETS.map((bucket) => {
    const share = distribution[bucket] ?? 0;
    return { bucket, share, label: `${(share * 100).toFixed(1)}%` };
  });
}

function buildControls(
  draft: PolicyDraft,
  policy: PolicyJson,
  band: number,
): ControlsView {
  const weights = draft.workingWeights(policy);
  const bonuses = draft.workingBonuses(policy);
  return {
    disabled: false,
    weights: Object.keys(policy.weights).map((name) => ({
      name,
      value: weights[name] ?? "",
    })),
    cutoffs: draft
      .workingCutoffs(policy)
      .map((row, index) => ({ index, concept: row.concept, min: row.min })),
    improvement: bonuses.improvement,
    activity: bonuses.activity,
    recPolicy: draft.workingRecPolicy(policy),
    recPolicyOptions: REC_POLICY_OPTIONS,
    borderlineBand: band,
  };
}

// Rendering ---------------------------------------------------------------

const HTML_ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => HTML_ESCAPES[ch] ?? ch);
}

function attr(value: string): string {
  return `"${escapeHtml(value)}"`;
}

export function renderDistributionBar(segments: BarSegment[]): string {
  const parts = segments.map((segment) => {
    const width = Math.max(segment.share * 100, 0);
    return (
      `<div class="bar-segment bucket-${cssBucket(segment.bucket)}"` +
      ` data-bucket=${attr(segment.bucket)}` +
      ` data-share=${attr(String(segment.share))}` +
      ` style="flex-grow: ${width.toFixed(4)};">` +
      `<span class="bar-label">${escapeHtml(segment.bucket)} ${escapeHtml(segment.label)}</span>` +
      `</div>`
    );
  });
  return `<div class="distribution-bar">${parts.join("")}</div>`;
}

function cssBucket(bucket: string): string {
  return bucket === "F+O" ? "fo" : bucket.toLowerCase();
}

export function renderTable(vm: ViewModel): string {
  if (vm.emptyState) {
    return `<p class="empty-state">No students in this cohort yet; load records first.</p>`;
  }
  const head =
    "<tr><th>student</th>" +
    vm.assessmentNames.map((name) => `<th>${escapeHtml(name)}</th>`).join("") +
    "<th>CR</th><th>CbREC</th><th>REC</th><th>final</th></tr>";
  const body = vm.rows
    .map((row) => {
      const classes = ["student-row"];
      if (row.changed !== null) classes.push("changed");
      if (row.nearCutoff !== null) classes.push("borderline");
      const title =
        row.nearCutoff === null
          ? ""
          : ` title=${attr(`within band of the ${row.nearCutoff.concept} cutoff at ${row.nearCutoff.min}`)}`;
      const finalCell =
        row.changed === null
          ? escapeHtml(row.final)
          : `<span class="delta"><s>${escapeHtml(row.changed.before)}</s> &rarr; ` +
            `<strong>${escapeHtml(row.changed.after)}</strong></span>`;
      return (
        `<tr class="${classes.join(" ")}" data-student=${attr(row.id)}${title}>` +
        `<td>${escapeHtml(row.id)}</td>` +
        row.concepts
          .map((concept) => `<td>${concept === null ? "&mdash;" : escapeHtml(concept)}</td>`)
          .join("") +
        `<td class="cr">${escapeHtml(row.cr)}</td>` +
        `<td>${escapeHtml(row.cbrec)}</td>` +
        `<td>${row.rec === null ? "&mdash;" : escapeHtml(row.rec)}</td>` +
        `<td class="final">${finalCell}</td>` +
        `</tr>`
      );
    })
    .join("");
  return `<table class="cohort"><thead>${head}</thead><tbody>${body}</tbody></table>`;
}

export function renderControls(vm: ViewModel): string {
  const controls = vm.controls;
  if (controls === null) return "";
  const disabled = controls.disabled ? " disabled" : "";
  const weights = controls.weights
    .map(
      (weight) =>
        `<label class="control">${escapeHtml(weight.name)}` +
        `<input data-weight=${attr(weight.name)} value=${attr(weight.value)}${disabled}>` +
        `</label>`,
    )
    .join("");
  const cutoffs = controls.cutoffs
    .map(
      (row) =>
        `<label class="control">${escapeHtml(row.concept)} &ge;` +
        `<input data-cutoff=${attr(String(row.index))}` +
        ` data-concept=${attr(row.concept)} value=${attr(row.min)}${disabled}>` +
        `</label>`,
    )
    .join("");
  const recOptions = controls.recPolicyOptions
    .map(
      (option) =>
        `<option value=${attr(option)}${option === controls.recPolicy ? " selected" : ""}>` +
        `${escapeHtml(option)}</option>`,
    )
    .join("");
  const inlineError =
    vm.previewError === null
      ? ""
      : `<p class="inline-error" role="alert">${escapeHtml(vm.previewError)}</p>`;
  return (
    `<section class="controls">` +
    `<h2>Weights</h2><div class="control-row">${weights}</div>` +
    `<h2>Final cutoffs</h2><div class="control-row">${cutoffs}</div>` +
    `<h2>Bonuses</h2><div class="control-row">` +
    `<label class="control">improvement factor` +
    `<input data-bonus="improvement" value=${attr(controls.improvement)}${disabled}></label>` +
    `<label class="control">activity factor` +
    `<input data-bonus="activity" value=${attr(controls.activity)}${disabled}></label>` +
    `</div>` +
    `<h2>Recovery</h2><div class="control-row">` +
    `<select data-rec-policy${disabled}>${recOptions}</select>` +
    `</div>` +
    `<h2>View</h2><div class="control-row">` +
    `<label class="control">borderline band &plusmn;` +
    `<input data-borderline-band value=${attr(String(controls.borderlineBand))}${disabled}>` +
    `</label>` +
    `</div>` +
    inlineError +
    `<div class="actions">` +
    `<button data-action="reset"${vm.dirty && !controls.disabled ? "" : " disabled"}>reset draft</button>` +
    `<button data-action="persist"${vm.canPersist ? "" : " disabled"}>save policy</button>` +
    `${vm.dirty ? `<span class="dirty-pill">unsaved draft</span>` : ""}` +
    `</div>` +
    `</section>`
  );
}

export function renderAudit(vm: ViewModel): string {
  const heading = vm.auditDraftApplied
    ? "Fairness findings (under draft)"
    : "Fairness findings";
  const body =
    vm.auditFindings.length === 0
      ? `<p class="no-findings">none</p>`
      : `<ul>` +
        vm.auditFindings
          .map((finding) => `<li>${escapeHtml(finding.explanation)}</li>`)
          .join("") +
        `</ul>`;
  return `<section class="audit"><h2>${heading}</h2>${body}</section>`;
}

export function renderBanners(vm: ViewModel): string {
  const banners: string[] = [];
  if (vm.stale !== null) {
    const current =
      vm.stale.currentSnapshotId === null
        ? ""
        : ` (now at snapshot ${vm.stale.currentSnapshotId})`;
    banners.push(
      `<div class="banner stale" role="alert">` +
        `another session saved a policy${escapeHtml(current)}: ` +
        `<button data-action="reload">reload</button></div>`,
    );
  }
  if (vm.persistError !== null) {
    banners.push(
      `<div class="banner error" role="alert">${escapeHtml(vm.persistError)}</div>`,
    );
  }
  if (vm.savedSnapshotId !== null) {
    banners.push(
      `<div class="banner saved">saved as snapshot ${vm.savedSnapshotId}</div>`,
    );
  }
  if (vm.previewPending) {
    banners.push(`<div class="banner pending">previewing&hellip;</div>`);
  }
  return banners.join("");
}

export function renderApp(vm: ViewModel): string {
  if (vm.status === "loading" || vm.status === "idle") {
    return `<p class="loading">loading cohort&hellip;</p>`;
  }
  if (vm.status === "error") {
    return (
      `<div class="banner error" role="alert">${escapeHtml(vm.loadError ?? "load failed")}` +
      ` <button data-action="retry">retry</button></div>`
    );
  }
  const header =
    `<header><h1>Calibration console</h1>` +
    `<p class="meta">term ${escapeHtml(vm.term)} &middot; snapshot ${vm.snapshotId ?? "?"}</p>` +
    `</header>`;
  return (
    header +
    renderBanners(vm) +
    renderDistributionBar(vm.distribution) +
    `<main class="layout">` +
    `<div class="table-pane">${renderTable(vm)}</div>` +
    `<div class="side-pane">${renderControls(vm)}${renderAudit(vm)}</div>` +
    `</main>`
  );
}
