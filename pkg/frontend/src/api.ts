/**
 * Typed fetch client for the market service.
 *
 * All endpoints return the service payload verbatim. Any non-2xx answer
 * becomes an ApiError carrying the service's normalized rejection (reason,
 * detail, and for out-of-limits the limits as they stand now). Busy answers
 * to a trade are retried with a bounded backoff because they mean "try again
 * in a moment", nothing else.
 */

import type {
  AssetsResponse,
  EditRequest,
  MarginalsResponse,
  MarketInfo,
  PreviewResponse,
  RegisterResponse,
  Rejection,
  TradeAccepted,
  TradesResponse,
} from "./types.js";

/** FastAPI wraps error bodies as {"detail": ...}; dig the rejection out. */
function toRejection(status: number, body: unknown): Rejection {
  const detail =
    body && typeof body === "object" && "detail" in body
      ? (body as { detail: unknown }).detail
      : body;
  if (detail && typeof detail === "object" && "reason" in detail) {
    return detail as Rejection;
  }
  const reason =
    status === 503 ? "busy"
    : status === 409 ? "conflict"
    : status === 422 ? "same-clique"
    : status === 404 ? "not-found"
    : "invalid";
  return { reason, detail: typeof detail === "string" ? detail : JSON.stringify(detail) };
}

export class ApiError extends Error {
  readonly rejection: Rejection;

  constructor(
    readonly status: number,
    readonly payload: unknown,
  ) {
    const rejection = toRejection(status, payload);
    super(`${rejection.reason}: ${rejection.detail}`);
    this.name = "ApiError";
    this.rejection = rejection;
  }
}

export interface RetryOptions {
  /** Total attempts including the first one. */
  attempts?: number;
  /** Pause between attempts, milliseconds. */
  delayMs?: number;
}

/** What the console needs from a client; MarketClient is the live one. */
export interface MarketApi {
  market(): Promise<MarketInfo>;
  marginals(vars?: string[]): Promise<MarginalsResponse>;
  register(id: string): Promise<RegisterResponse>;
  assets(uid: string): Promise<AssetsResponse>;
  preview(uid: string, edit: EditRequest): Promise<PreviewResponse>;
  trade(uid: string, edit: EditRequest, newValue: number, opts?: RetryOptions): Promise<TradeAccepted>;
  trades(since?: number): Promise<TradesResponse>;
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

const isBusy = (err: unknown): err is ApiError =>
  err instanceof ApiError &&
  (err.rejection.reason === "busy" || err.rejection.reason === "queue-full");

export class MarketClient implements MarketApi {
  constructor(
    readonly baseUrl: string,
    // wrapped so the default keeps its own `this` (window or globalThis)
    private readonly fetchImpl: typeof fetch = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: unknown = null;
    const text = await res.text();
    if (text) {
      try {
        payload = JSON.parse(text);
      } catch {
        payload = text;
      }
    }
    if (!res.ok) throw new ApiError(res.status, payload);
    return payload as T;
  }

  market(): Promise<MarketInfo> {
    return this.request("GET", "/market");
  }

  marginals(vars?: string[]): Promise<MarginalsResponse> {
    const query = vars && vars.length ? `?vars=${encodeURIComponent(vars.join(","))}` : "";
    return this.request("GET", `/marginals${query}`);
  }

  register(id: string): Promise<RegisterResponse> {
    return this.request("POST", "/users", { id });
  }

  assets(uid: string): Promise<AssetsResponse> {
    return this.request("GET", `/users/${encodeURIComponent(uid)}/assets`);
  }

  preview(uid: string, edit: EditRequest): Promise<PreviewResponse> {
    return this.request("POST", `/users/${encodeURIComponent(uid)}/preview`, {
      target: edit.target,
      target_state: edit.target_state,
      assumptions: edit.assumptions,
    });
  }

  /**
   * Submit a trade. Busy and queue-full answers are retried up to
   * `opts.attempts` times under one idempotency token, so a retry can never
   * double-commit; every other rejection propagates as ApiError.
   */
  async trade(
    uid: string,
    edit: EditRequest,
    newValue: number,
    opts: RetryOptions = {},
  ): Promise<TradeAccepted> {
    const attempts = opts.attempts ?? 8;
    const delayMs = opts.delayMs ?? 50;
    const token = newToken();
    let lastBusy: ApiError | null = null;
    for (let attempt = 0; attempt < attempts; attempt++) {
      if (attempt > 0) await sleep(delayMs);
      try {
        return await this.request<TradeAccepted>(
          "POST",
          `/users/${encodeURIComponent(uid)}/trades`,
          {
            target: edit.target,
            target_state: edit.target_state,
            assumptions: edit.assumptions,
            new_value: newValue,
            token,
          },
        );
      } catch (err) {
        if (!isBusy(err)) throw err;
        lastBusy = err;
      }
    }
    throw lastBusy ?? new ApiError(503, { detail: { reason: "busy", detail: "market stayed busy" } });
  }

  trades(since = 0): Promise<TradesResponse> {
    return this.request("GET", `/trades?since=${since}`);
  }
}

function newToken(): string {
  const rng = globalThis.crypto;
  if (rng && typeof rng.randomUUID === "function") return rng.randomUUID();
  return `t-${Date.now()}-${Math.random().toString(36).slice(2, 10)}`;
}
