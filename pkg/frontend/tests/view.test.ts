import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ConsoleStore, memoryStorage } from "../src/state.js";
import type { Distribution, OutcomeJson } from "../src/types.js";
import {
  buildViewModel,
  renderApp,
  renderDistributionBar,
  renderTable,
} from "../src/view.js";
import { displayedShares, rowClasses, rowOrder } from "./helpers/dom.js";
import {
  SMALL_DISTRIBUTION,
  makeOutcome,
  makeSnapshot,
  smallCohort,
} from "./helpers/fixtures.js";
import { healthyService, identityPreview } from "./helpers/fakeService.js";

async function storeFor(outcomes: OutcomeJson[], distribution: Distribution) {
  const snapshot = makeSnapshot(outcomes, distribution);
  const service = healthyService(snapshot);
  const store = new ConsoleStore(new ApiClient("http://fake", service.fetch), {
    storage: memoryStorage(),
  });
  await store.load();
  return { snapshot, service, store };
}

describe("row ordering", () => {
  it("sorts by CR descending, ties by student id", async () => {
    const { store } = await storeFor(smallCohort(), SMALL_DISTRIBUTION);
    const vm = buildViewModel(store);
    expect(vm.rows.map((row) => row.id)).toEqual(["s1", "s4", "s2", "s3", "s5"]);
    const html = renderTable(vm);
    expect(rowOrder(html)).toEqual(["s1", "s4", "s2", "s3", "s5"]);
  });
});

describe("borderline band", () => {
  it("marks students within the band of a nonzero cutoff", async () => {
    const outcomes = [
      makeOutcome({ id: "near", cr: "3.45", final: "B+" }), // 0.05 from 3.4
      makeOutcome({ id: "exact", cr: "3.00", final: "B" }), // on the B cutoff
      makeOutcome({ id: "far", cr: "2.25", final: "C" }), // 0.25 from either side
      makeOutcome({ id: "low", cr: "0.05", final: "F" }), // only near the 0 row
    ];
    const { store } = await storeFor(outcomes, SMALL_DISTRIBUTION);
    const vm = buildViewModel(store);
    const byId = new Map(vm.rows.map((row) => [row.id, row]));
    expect(byId.get("near")?.nearCutoff).toEqual({ concept: "B+", min: "3.4" });
    expect(byId.get("exact")?.nearCutoff).toEqual({ concept: "B", min: "3" });
    expect(byId.get("far")?.nearCutoff).toBeNull();
    expect(byId.get("low")?.nearCutoff).toBeNull();

    const html = renderTable(vm);
    expect(rowClasses(html, "near")).toContain("borderline");
    expect(rowClasses(html, "far")).not.toContain("borderline");
  });

  it("is configurable", async () => {
    const outcomes = [makeOutcome({ id: "near", cr: "3.45", final: "B+" })];
    const { store } = await storeFor(outcomes, SMALL_DISTRIBUTION);
    store.setBorderlineBand(0.01);
    const vm = buildViewModel(store);
    expect(vm.rows[0]?.nearCutoff).toBeNull();
  });

  it("follows the draft's cutoff table, not the snapshot's", async () => {
    const outcomes = [makeOutcome({ id: "s", cr: "3.60", final: "B+" })];
    const { snapshot, service, store } = await storeFor(outcomes, SMALL_DISTRIBUTION);
    service.on("POST", "/api/preview", () => ({
      status: 200,
      body: identityPreview(snapshot),
    }));
    await store.edit((draft) => {
      const rows = draft.workingCutoffs(snapshot.policy);
      const arow = rows.find((row) => row.concept === "A-");
      if (arow !== undefined) arow.min = "3.5";
      draft.cutoffs = rows;
    });
    const vm = buildViewModel(store);
    expect(vm.rows[0]?.nearCutoff).toEqual({ concept: "A-", min: "3.5" });
  });
});

describe("delta highlighting", () => {
  it("shows before and after concepts on changed rows", async () => {
    const { snapshot, service, store } = await storeFor(
      smallCohort(),
      SMALL_DISTRIBUTION,
    );
    service.on("POST", "/api/preview", () => ({
      status: 200,
      body: {
        ...identityPreview(snapshot),
        deltas: [{ student_id: "s1", before: "B+", after: "A-", cr: "3.45" }],
      },
    }));
    await store.edit((draft) => {
      draft.rec_policy = "replace";
    });
    const vm = buildViewModel(store);
    const changed = vm.rows.find((row) => row.id === "s1");
    expect(changed?.changed).toEqual({ before: "B+", after: "A-" });
    const html = renderTable(vm);
    expect(rowClasses(html, "s1")).toContain("changed");
    expect(html).toContain("<s>B+</s>");
    expect(html).toContain("<strong>A-</strong>");
    expect(rowClasses(html, "s4")).not.toContain("changed");
  });

  it("a no-op edit highlights nothing", async () => {
    const { store } = await storeFor(smallCohort(), SMALL_DISTRIBUTION);
    await store.edit((draft) => {
      draft.rec_policy = "max_of"; // already the policy value
    });
    const vm = buildViewModel(store);
    expect(vm.rows.every((row) => row.changed === null)).toBe(true);
  });
});

describe("distribution bar", () => {
  it("embeds the exact shares it was given", () => {
    const distribution = {
      A: 0.2,
      B: 1 / 3,
      C: 0.13333333333333333,
      D: 0,
      "F+O": 0.3333333333333333,
    };
    const vm = { distribution } as { distribution: Distribution };
    const html = renderDistributionBar(
      Object.entries(vm.distribution).map(([bucket, share]) => ({
        bucket,
        share,
        label: `${(share * 100).toFixed(1)}%`,
      })),
    );
    const shares = displayedShares(html);
    expect(shares["A"]).toBe(0.2);
    expect(shares["B"]).toBe(1 / 3);
    expect(shares["C"]).toBe(0.13333333333333333);
    expect(shares["D"]).toBe(0);
    expect(shares["F+O"]).toBe(0.3333333333333333);
  });

  it("renders buckets in scale order with percent labels", async () => {
    const { store } = await storeFor(smallCohort(), SMALL_DISTRIBUTION);
    const vm = buildViewModel(store);
    expect(vm.distribution.map((segment) => segment.bucket)).toEqual([
      "A",
      "B",
      "C",
      "D",
      "F+O",
    ]);
    expect(vm.distribution[1]?.label).toBe("40.0%");
    const html = renderDistributionBar(vm.distribution);
    expect(html).toContain("B 40.0%");
  });
});

describe("controls", () => {
  it("disables everything on an empty cohort", async () => {
    const { store } = await storeFor([], { A: 0, B: 0, C: 0, D: 0, "F+O": 0 });
    const vm = buildViewModel(store);
    expect(vm.emptyState).toBe(true);
    expect(vm.controls?.disabled).toBe(true);
    const html = renderApp(vm);
    expect(html).toContain("No students in this cohort yet");
    expect(html).toContain('data-weight="Exam1" value="0.3" disabled');
    expect(html).toContain('data-action="persist" disabled');
  });

  it("renders weight and cutoff inputs from the working draft", async () => {
    const { snapshot, store } = await storeFor(smallCohort(), SMALL_DISTRIBUTION);
    await store.edit((draft) => {
      const weights = draft.workingWeights(snapshot.policy);
      weights["Exam1"] = "0.35";
      weights["Exam2"] = "0.35";
      draft.weights = weights;
    });
    const vm = buildViewModel(store);
    const html = renderApp(vm);
    expect(html).toContain('data-weight="Exam1" value="0.35"');
    expect(html).toContain('data-weight="Activities" value="0.15"');
    expect(html).toContain('data-cutoff="9" data-concept="B+" value="3.4"');
    expect(html).toContain("unsaved draft");
  });

  it("shows the inline error and keeps the save button disabled", async () => {
    const { store } = await storeFor(smallCohort(), SMALL_DISTRIBUTION);
    await store.edit((draft) => {
      draft.weights = {
        Exam1: "0.5",
        Activities: "0.5",
        Project: "0.2",
        Exam2: "0",
      };
    });
    const vm = buildViewModel(store);
    const html = renderApp(vm);
    expect(html).toContain("weights sum to 1.2, expected 1");
    expect(html).toContain('data-action="persist" disabled');
  });

  it("escapes markup in dynamic text", async () => {
    const outcomes = [
      makeOutcome({ id: "<img src=x>", cr: "2.00", final: "C" }),
    ];
    const { store } = await storeFor(outcomes, SMALL_DISTRIBUTION);
    const html = renderTable(buildViewModel(store));
    expect(html).not.toContain("<img");
    expect(html).toContain("&lt;img src=x&gt;");
  });
});

describe("top-level states", () => {
  it("renders the retry button on load failure", async () => {
    const { store } = await storeFor(smallCohort(), SMALL_DISTRIBUTION);
    store.status = "error";
    store.loadError = "calibration service unreachable";
    const html = renderApp(buildViewModel(store));
    expect(html).toContain("calibration service unreachable");
    expect(html).toContain('data-action="retry"');
  });

  it("renders the stale banner with a reload control", async () => {
    const { store } = await storeFor(smallCohort(), SMALL_DISTRIBUTION);
    store.stale = { currentSnapshotId: 3, detail: "stale" };
    const html = renderApp(buildViewModel(store));
    expect(html).toContain("another session saved a policy");
    expect(html).toContain("snapshot 3");
    expect(html).toContain('data-action="reload"');
  });
});
