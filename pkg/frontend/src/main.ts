/** Browser entry point: mounts the console on #app and wires the controls.
 *
 * The whole view re-renders on every store change; events are delegated
 * from the mount node so handlers survive re-renders.  Served from the same
 * origin as the API (gradeforge calibrate serve --static), so the base URL
 * is simply the page origin.
 */

import { ApiClient } from "./api.js";
import { ConsoleStore, type KVStorage } from "./state.js";
import { buildViewModel, renderApp } from "./view.js";

function browserStorage(): KVStorage {
  return {
    get: (key) => window.localStorage.getItem(key),
    set: (key, value) => window.localStorage.setItem(key, value),
    remove: (key) => window.localStorage.removeItem(key),
  };
}

function mount(root: HTMLElement, store: ConsoleStore): void {
  const render = () => {
    root.innerHTML = renderApp(buildViewModel(store));
  };
  store.subscribe(render);
  render();

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-action]");
    if (!(target instanceof HTMLElement)) return;
    const action = target.dataset["action"];
    if (action === "retry" || action === "reload") void store.load();
    if (action === "persist") void store.persist();
    if (action === "reset") void store.resetDraft();
  });

  root.addEventListener("change", (event) => {
    const target = event.target;
    if (
      !(target instanceof HTMLInputElement) &&
      !(target instanceof HTMLSelectElement)
    ) {
      return;
    }
    const { weight, cutoff, bonus, recPolicy, borderlineBand } = target.dataset;
    if (weight !== undefined) {
      void store.edit((draft) => {
        const weights = draft.workingWeights(store.snapshot!.policy);
        weights[weight] = target.value;
        draft.weights = weights;
      });
    } else if (cutoff !== undefined) {
      const index = Number(cutoff);
      void store.edit((draft) => {
        const rows = draft.workingCutoffs(store.snapshot!.policy);
        const row = rows[index];
        if (row !== undefined) row.min = target.value;
        draft.cutoffs = rows;
      });
    } else if (bonus !== undefined) {
      void store.edit((draft) => {
        const bonuses = { ...(draft.bonuses ?? {}) };
        if (bonus === "improvement") bonuses.improvement = target.value;
        if (bonus === "activity") bonuses.activity = target.value;
        draft.bonuses = bonuses;
      });
    } else if (recPolicy !== undefined) {
      void store.edit((draft) => {
        draft.rec_policy = target.value;
      });
    } else if (borderlineBand !== undefined) {
      store.setBorderlineBand(Number(target.value));
    }
  });
}

const appRoot = document.getElementById("app");
if (appRoot !== null) {
  const store = new ConsoleStore(new ApiClient(window.location.origin), {
    storage: browserStorage(),
  });
  mount(appRoot, store);
  void store.load();
}
