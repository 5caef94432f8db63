/** Console state machine.
 *
 * One store per page: it owns the loaded snapshot, the draft overrides, the
 * preview corresponding to that draft, the audit findings, and the error
 * surfaces.  All grade arithmetic happens in the service; the store only
 * decides which requests to send and which responses are still current.
 *
 * Staleness rules:
 *  - editing discards the previous preview immediately; a response is
 *    applied only when it answers the latest request (token check), so
 *    out-of-order replies can never show a preview for an older draft;
 *  - persisting with an outdated snapshot id surfaces the 409 as a reload
 *    prompt and keeps the draft, locally and in storage.
 *
 * The unsent draft is the only thing that survives a reload: it is written
 * to storage under a key derived from the snapshot id it was edited
 * against.
 */

import {
  ApiClient,
  ApiError,
  ConnectionError,
  StaleSnapshotError,
} from "./api.js";
import { PolicyDraft } from "./draft.js";
import type {
  AuditFinding,
  PreviewResponse,
  SnapshotResponse,
} from "./types.js";
import { SCHEMA_VERSION } from "./types.js";

export interface KVStorage {
  get(key: string): string | null;
  set(key: string, value: string): void;
  remove(key: string): void;
}

export function memoryStorage(): KVStorage {
  const data = new Map<string, string>();
  return {
    get: (key) => (data.has(key) ? data.get(key)! : null),
    set: (key, value) => void data.set(key, value),
    remove: (key) => void data.delete(key),
  };
}

export type ConsoleStatus = "idle" | "loading" | "ready" | "error";

export interface StaleInfo {
  currentSnapshotId: number | null;
  detail: string;
}

export interface StoreOptions {
  storage?: KVStorage;
  borderlineBand?: number;
}

const DRAFT_KEY_PREFIX = "gradeforge.draft.";

export class ConsoleStore {
  readonly api: ApiClient;
  private readonly storage: KVStorage;

  status: ConsoleStatus = "idle";
  loadError: string | null = null;
  snapshot: SnapshotResponse | null = null;
  draft: PolicyDraft = new PolicyDraft();
  preview: PreviewResponse | null = null;
  auditFindings: AuditFinding[] = [];
  auditDraftApplied = false;
  /** Inline message for a draft the service (or the precheck) rejected. */
  previewError: string | null = null;
  /** Set when a persist came back 409; cleared by reload(). */
  stale: StaleInfo | null = null;
  /** Banner message after a successful persist. */
  savedSnapshotId: number | null = null;
  /** Set when a persist failed in transit; the draft stays local. */
  persistError: string | null = null;
  previewPending = false;
  /** Half-width of the band, in CR units, that marks students near a
   * cutoff.  Display-only knob; never sent to the service. */
  borderlineBand: number;

  private listeners = new Set<() => void>();
  private requestSeq = 0;

  constructor(api: ApiClient, options: StoreOptions = {}) {
    this.api = api;
    this.storage = options.storage ?? memoryStorage();
    this.borderlineBand = options.borderlineBand ?? 0.1;
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  get dirty(): boolean {
    if (this.snapshot === null) return false;
    return this.draft.dirtyAgainst(this.snapshot.policy);
  }

  get canPersist(): boolean {
    return (
      this.status === "ready" &&
      this.stale === null &&
      this.dirty &&
      this.preview !== null &&
      this.previewError === null &&
      !this.previewPending
    );
  }

  private draftKey(snapshotId: number): string {
    return DRAFT_KEY_PREFIX + String(snapshotId);
  }

  /** Load (or reload) the snapshot; restores this snapshot's stored draft
   * and previews it so every panel reflects the current draft. */
  async load(): Promise<void> {
    this.status = "loading";
    this.loadError = null;
    this.stale = null;
    this.persistError = null;
    this.notify();
    let snapshot: SnapshotResponse;
    try {
      snapshot = await this.api.snapshot();
    } catch (error) {
      this.status = "error";
      this.loadError = describeError(error);
      this.notify();
      return;
    }
    if (snapshot.schema !== SCHEMA_VERSION) {
      this.status = "error";
      this.loadError =
        `service speaks schema ${snapshot.schema}, console expects ` +
        `${SCHEMA_VERSION}; not loading`;
      this.notify();
      return;
    }
    this.snapshot = snapshot;
    this.status = "ready";
    this.preview = null;
    this.previewError = null;
    this.auditFindings = [];
    this.auditDraftApplied = false;
    const stored = this.storage.get(this.draftKey(snapshot.snapshot_id));
    this.draft = (stored !== null ? PolicyDraft.fromStorage(stored) : null)
      ?? new PolicyDraft();
    this.notify();
    if (snapshot.students.length > 0) {
      await this.refreshPreview();
    }
  }

  /** Clear the stale flag and pick up the service's current snapshot. */
  async reload(): Promise<void> {
    await this.load();
  }

  /** Apply one mutation to the draft, then preview it.
   *
   * The previous preview is discarded before the request goes out, so the
   * table never shows outcomes for a draft the user has already replaced.
   * A draft failing the weight-sum precheck is kept locally (and shown as
   * an inline error) but never sent.
   */
  async edit(mutate: (draft: PolicyDraft) => void): Promise<void> {
    if (this.snapshot === null || this.snapshot.students.length === 0) return;
    mutate(this.draft);
    this.draft = this.draft.normalized(this.snapshot.policy);
    this.storeDraft();
    this.savedSnapshotId = null;
    this.preview = null;
    this.previewError = null;
    await this.refreshPreview();
  }

  async resetDraft(): Promise<void> {
    await this.edit((draft) => {
      delete draft.cutoffs;
      delete draft.weights;
      delete draft.bonuses;
      delete draft.rec_policy;
    });
  }

  private storeDraft(): void {
    if (this.snapshot === null) return;
    const key = this.draftKey(this.snapshot.snapshot_id);
    if (this.draft.isEmpty()) {
      this.storage.remove(key);
    } else {
      this.storage.set(key, this.draft.toStorage());
    }
  }

  private async refreshPreview(): Promise<void> {
    if (this.snapshot === null) return;
    const check = this.draft.checkWeights();
    if (!check.ok) {
      this.previewError = check.message;
      this.previewPending = false;
      this.notify();
      return;
    }
    const token = ++this.requestSeq;
    this.previewPending = true;
    this.notify();
    let preview: PreviewResponse;
    try {
      preview = await this.api.preview(this.draft.toRequestBody(this.snapshot.policy));
    } catch (error) {
      if (token !== this.requestSeq) return;
      this.previewPending = false;
      this.previewError = describeError(error);
      this.notify();
      return;
    }
    if (token !== this.requestSeq) return;
    this.preview = preview;
    this.previewError = null;
    this.notify();
    try {
      const audit = await this.api.audit();
      if (token !== this.requestSeq) return;
      this.auditFindings = audit.findings;
      this.auditDraftApplied = audit.draft_applied;
    } catch {
      if (token !== this.requestSeq) return;
      // keep previous findings; the preview itself already succeeded
    }
    this.previewPending = false;
    this.notify();
  }

  /** Persist the previewed draft.  Requires canPersist. */
  async persist(): Promise<void> {
    if (!this.canPersist || this.snapshot === null) return;
    const snapshotId = this.snapshot.snapshot_id;
    const body = {
      ...this.draft.toRequestBody(this.snapshot.policy),
      snapshot_id: snapshotId,
    };
    this.persistError = null;
    try {
      const saved = await this.api.persist(body);
      this.storage.remove(this.draftKey(snapshotId));
      await this.load();
      this.savedSnapshotId = saved.snapshot_id;
      this.notify();
    } catch (error) {
      if (error instanceof StaleSnapshotError) {
        this.stale = {
          currentSnapshotId: error.currentSnapshotId,
          detail: error.detail,
        };
      } else if (error instanceof ConnectionError) {
        this.persistError =
          "calibration service unreachable; the draft is kept locally";
      } else {
        this.persistError = describeError(error);
      }
      this.notify();
    }
  }

  setBorderlineBand(band: number): void {
    if (Number.isFinite(band) && band >= 0) {
      this.borderlineBand = band;
      this.notify();
    }
  }
}

function describeError(error: unknown): string {
  if (error instanceof ConnectionError) {
    return "calibration service unreachable";
  }
  if (error instanceof ApiError) {
    return error.detail;
  }
  return String(error);
}
