/**
 * Trader console: one user session bound to a DOM root.
 *
 * Renders the marginal table, an edit form (target, state, same-clique
 * assumptions, proposed value on a slider), the preview panel with limits and
 * long/short badge, and the user's own asset panel. All mutation goes through
 * the service; every displayed number is service-sourced and only formatted
 * here.
 */

import { ApiError, type MarketApi } from "./api.js";
import {
  formatJointState,
  formatLimitsInterval,
  formatProb,
  formatScore,
} from "./format.js";
import { assumptionCandidates, statesOf, validateEdit } from "./form.js";
import { clampToLimits, insideLimits, sliderGeometry } from "./limits.js";
import { Poller } from "./poll.js";
import type {
  AssetsResponse,
  EditRequest,
  MarketInfo,
  PreviewResponse,
} from "./types.js";
import { badgeConsistent, positionView } from "./view.js";

export interface ConsoleOptions {
  /** Marginal refresh period; the default matches a human reading the table. */
  pollMs?: number;
  /** Off in tests, which drive ticks through poller.run(). */
  autoPoll?: boolean;
}

export type BannerKind = "accepted" | "busy" | "limit-shift" | "error";

const SKELETON = `
<div class="console">
  <div class="console-head">
    <span data-role="title"></span>
    <span class="seq">trade #<span data-role="seq">0</span></span>
  </div>
  <div class="banner" data-role="banner" data-kind="" hidden></div>
  <table class="marginals">
    <tbody data-role="marginals"></tbody>
  </table>
  <form data-role="edit-form">
    <label>target <select data-role="target"></select></label>
    <label>state <select data-role="target-state"></select></label>
    <div class="assumptions" data-role="assumptions"></div>
    <label>value
      <input type="range" data-role="value-slider" />
      <input type="number" data-role="value-input" step="any" />
    </label>
    <div class="form-error" data-role="form-error" hidden></div>
    <button type="button" data-role="preview-btn">preview</button>
    <button type="button" data-role="commit-btn">commit</button>
  </form>
  <div class="preview-panel" data-role="preview-panel" hidden>
    <span>now <span data-role="current"></span></span>
    <span>limits <span data-role="limits"></span></span>
    <span>if true <span data-role="score-true"></span></span>
    <span>if false <span data-role="score-false"></span></span>
    <span class="badge" data-role="badge"></span>
  </div>
  <div class="assets-panel">
    <span>expected score <span data-role="expected-score"></span></span>
    <span>min score <span data-role="min-score"></span></span>
    <span>min q <span data-role="min-q"></span></span>
    <span>min states <span data-role="min-states"></span></span>
  </div>
</div>`;

export class TraderConsole {
  market!: MarketInfo;
  preview: PreviewResponse | null = null;
  readonly poller: Poller;

  private readonly pollMs: number;
  private readonly autoPoll: boolean;
  private lastSeq = 0;
  private previewSeq = -1;
  private els!: Record<string, HTMLElement>;
  private form: EditRequest & { value: number | null } = {
    target: "",
    target_state: "",
    assumptions: {},
    value: null,
  };

  constructor(
    readonly root: HTMLElement,
    readonly client: MarketApi,
    readonly user: string,
    opts: ConsoleOptions = {},
  ) {
    this.pollMs = opts.pollMs ?? 1000;
    this.autoPoll = opts.autoPoll ?? true;
    this.poller = new Poller(() => this.onPoll(), this.pollMs, () => {
      this.showBanner("error", "lost contact with the market, retrying");
    });
  }

  async init(): Promise<void> {
    this.market = await this.client.market();
    try {
      await this.client.register(this.user);
    } catch (err) {
      // an existing account is a login, not a failure
      if (!(err instanceof ApiError && err.status === 409)) throw err;
    }

    this.root.innerHTML = SKELETON;
    this.els = {};
    for (const el of Array.from(this.root.querySelectorAll<HTMLElement>("[data-role]"))) {
      this.els[el.dataset.role as string] = el;
    }
    this.els["title"].textContent = `${this.user} @ market`;
    this.bindForm();

    const targetSel = this.els["target"] as HTMLSelectElement;
    targetSel.innerHTML = this.market.variables
      .map((v) => `<option value="${v.name}">${v.name}</option>`)
      .join("");
    this.setTarget(this.market.variables[0].name);

    const snap = await this.client.marginals();
    this.lastSeq = snap.seq;
    this.renderSeq(snap.seq);
    this.renderMarginals(snap.marginals);
    this.renderAssets(await this.client.assets(this.user));
    if (this.autoPoll) this.poller.start();
  }

  destroy(): void {
    this.poller.stop();
  }

  // -- scripted form entry (also used by the DOM event handlers) -------------

  setTarget(name: string): void {
    this.form.target = name;
    this.form.assumptions = {};
    this.form.value = null;
    this.clearPreview();
    (this.els["target"] as HTMLSelectElement).value = name;
    const stateSel = this.els["target-state"] as HTMLSelectElement;
    const states = statesOf(this.market, name);
    stateSel.innerHTML = states.map((s) => `<option value="${s}">${s}</option>`).join("");
    this.form.target_state = states[0] ?? "";
    this.renderAssumptionPickers();
  }

  setTargetState(state: string): void {
    this.form.target_state = state;
    (this.els["target-state"] as HTMLSelectElement).value = state;
    this.clearPreview();
  }

  /** state null clears the assumption. No filtering here; validation reports. */
  setAssumption(name: string, state: string | null): void {
    if (state === null) delete this.form.assumptions[name];
    else this.form.assumptions[name] = state;
    this.clearPreview();
    this.renderAssumptionPickers();
  }

  setValue(value: number): void {
    const v = this.preview ? clampToLimits(value, this.preview.limits) : value;
    this.form.value = v;
    (this.els["value-input"] as HTMLInputElement).value = String(v);
    (this.els["value-slider"] as HTMLInputElement).value = String(v);
  }

  get editRequest(): EditRequest {
    return {
      target: this.form.target,
      target_state: this.form.target_state,
      assumptions: { ...this.form.assumptions },
    };
  }

  // -- service round trips ----------------------------------------------------

  async loadPreview(): Promise<void> {
    const problems = validateEdit(this.market, this.editRequest);
    if (problems.length) {
      this.showFormError(problems.join("; "));
      return;
    }
    this.showFormError(null);
    let pv: PreviewResponse;
    try {
      pv = await this.client.preview(this.user, this.editRequest);
    } catch (err) {
      await this.handleRejection(err, () => this.loadPreview());
      return;
    }
    if (!badgeConsistent(pv)) {
      this.showBanner("error", "service sent an inconsistent position payload");
      return;
    }
    this.preview = pv;
    this.previewSeq = this.lastSeq;
    this.applySliderLimits(pv);
    this.renderPreview(pv);
  }

  async commit(): Promise<void> {
    if (!this.preview) {
      this.showFormError("preview the edit before committing");
      return;
    }
    const problems = validateEdit(this.market, this.editRequest);
    if (problems.length) {
      this.showFormError(problems.join("; "));
      return;
    }
    const value = this.form.value;
    if (value === null || !insideLimits(value, this.preview.limits)) {
      this.showFormError("proposed value must sit strictly inside the limits");
      return;
    }
    this.showFormError(null);
    try {
      const out = await this.client.trade(this.user, this.editRequest, value);
      this.lastSeq = out.record.seq;
      this.renderSeq(out.record.seq);
      this.renderMarginals(out.marginals);
      this.renderAssets({
        id: this.user,
        expected_score: out.expected_score,
        min_q: out.min_q,
        min_score: out.min_score,
        min_states: out.min_states,
        truncated: out.truncated,
      });
      this.showBanner(
        "accepted",
        `trade #${out.record.seq} accepted at ${formatProb(out.record.new_p)}`,
      );
      await this.loadPreview();
    } catch (err) {
      await this.handleRejection(err, () => this.commit());
    }
  }

  /** One poll tick: refresh marginals, re-preview when someone else traded. */
  private async onPoll(): Promise<void> {
    const snap = await this.client.marginals();
    if (snap.seq === this.lastSeq) return;
    this.lastSeq = snap.seq;
    this.renderSeq(snap.seq);
    this.renderMarginals(snap.marginals);
    this.renderAssets(await this.client.assets(this.user));
    if (this.preview && this.previewSeq !== snap.seq) {
      await this.loadPreview();
    }
  }

  private async handleRejection(err: unknown, retry: () => Promise<void>): Promise<void> {
    if (!(err instanceof ApiError)) throw err;
    const r = err.rejection;
    if (r.reason === "busy" || r.reason === "queue-full") {
      this.showBanner("busy", "market is busy committing another trade", retry);
      return;
    }
    if (r.reason === "out-of-limits") {
      const moved =
        r.lower !== undefined && r.upper !== undefined
          ? ` limits moved to ${formatLimitsInterval(r.lower, r.upper)}`
          : "";
      this.showBanner("limit-shift", `trade rejected:${moved || " " + r.detail}`);
      // somebody moved the price since the preview; show the fresh interval
      await this.loadPreview();
      return;
    }
    if (r.reason === "same-clique") {
      this.showFormError(r.detail);
      return;
    }
    this.showBanner("error", `${r.reason}: ${r.detail}`);
  }

  // -- rendering ----------------------------------------------------------------

  private renderSeq(seq: number): void {
    this.els["seq"].textContent = String(seq);
  }

  private renderMarginals(marginals: Record<string, number[]>): void {
    const order = this.market.variables;
    this.els["marginals"].innerHTML = order
      .map((v) => {
        const row = marginals[v.name] ?? [];
        const cells = v.states
          .map((s, i) => `<td data-state="${s}">${i < row.length ? formatProb(row[i]) : ""}</td>`)
          .join("");
        return `<tr data-var="${v.name}"><th>${v.name}</th>${cells}</tr>`;
      })
      .join("");
  }

  private renderAssets(assets: AssetsResponse): void {
    this.els["expected-score"].textContent = formatScore(assets.expected_score);
    this.els["min-score"].textContent = formatScore(assets.min_score);
    this.els["min-q"].textContent = formatScore(assets.min_q);
    const names = this.market.variables.map((v) => v.name);
    const states = assets.min_states.map((s) => formatJointState(s, names)).join(" ");
    this.els["min-states"].textContent = assets.truncated ? `${states} …` : states;
  }

  private renderPreview(pv: PreviewResponse): void {
    const view = positionView(pv);
    this.els["current"].textContent = view.currentText;
    this.els["limits"].textContent = view.limitsText;
    this.els["score-true"].textContent = view.scoreIfTrue;
    this.els["score-false"].textContent = view.scoreIfFalse;
    const badge = this.els["badge"];
    badge.textContent = view.badge;
    badge.className = `badge badge-${view.badge}`;
    this.els["preview-panel"].hidden = false;
  }

  private clearPreview(): void {
    this.preview = null;
    this.previewSeq = -1;
    this.els["preview-panel"].hidden = true;
  }

  private applySliderLimits(pv: PreviewResponse): void {
    const slider = this.els["value-slider"] as HTMLInputElement;
    const geometry = sliderGeometry(pv.limits);
    slider.min = String(geometry.min);
    slider.max = String(geometry.max);
    slider.step = String(geometry.step);
    const current = this.form.value ?? pv.current_conditional;
    this.setValue(clampToLimits(current, pv.limits));
  }

  private showFormError(text: string | null): void {
    const el = this.els["form-error"];
    el.hidden = text === null;
    el.textContent = text ?? "";
  }

  private showBanner(kind: BannerKind, text: string, retry?: () => Promise<void>): void {
    const banner = this.els["banner"];
    banner.hidden = false;
    banner.dataset.kind = kind;
    banner.textContent = text;
    if (retry) {
      const btn = banner.ownerDocument.createElement("button");
      btn.type = "button";
      btn.dataset.role = "retry";
      btn.textContent = "retry";
      btn.addEventListener("click", () => void retry());
      banner.append(" ", btn);
    }
  }

  private renderAssumptionPickers(): void {
    const chosen = Object.keys(this.form.assumptions);
    const candidates = assumptionCandidates(this.market, this.form.target, chosen);
    const shown = [...new Set([...chosen, ...candidates])].sort();
    const area = this.els["assumptions"];
    area.innerHTML = shown
      .map((name) => {
        const options = statesOf(this.market, name)
          .map((s) => `<option value="${s}">${s}</option>`)
          .join("");
        return `<label>given ${name}
          <select data-assumption="${name}">
            <option value=""></option>${options}
          </select>
        </label>`;
      })
      .join("");
    for (const sel of Array.from(
      area.querySelectorAll<HTMLSelectElement>("select[data-assumption]"),
    )) {
      const name = sel.dataset.assumption as string;
      sel.value = this.form.assumptions[name] ?? "";
      sel.addEventListener("change", () => {
        this.setAssumption(name, sel.value === "" ? null : sel.value);
      });
    }
  }

  private bindForm(): void {
    const targetSel = this.els["target"] as HTMLSelectElement;
    targetSel.addEventListener("change", () => this.setTarget(targetSel.value));
    const stateSel = this.els["target-state"] as HTMLSelectElement;
    stateSel.addEventListener("change", () => this.setTargetState(stateSel.value));

    const slider = this.els["value-slider"] as HTMLInputElement;
    slider.addEventListener("input", () => this.setValue(Number(slider.value)));
    const input = this.els["value-input"] as HTMLInputElement;
    input.addEventListener("change", () => this.setValue(Number(input.value)));

    this.els["preview-btn"].addEventListener("click", () => void this.loadPreview());
    this.els["commit-btn"].addEventListener("click", () => void this.commit());
  }
}
