/**
 * Payload shapes of the market service REST API.
 *
 * Every number the console renders comes out of one of these payloads; the
 * client never recomputes a market quantity on its own.
 */

export interface VariableInfo {
  name: string;
  states: string[];
}

export interface MarketInfo {
  variables: VariableInfo[];
  cliques: string[][];
  separators: string[][];
  treewidth: number;
  b: number;
  q0: number;
  seq: number;
}

export interface MarginalsResponse {
  marginals: Record<string, number[]>;
  seq: number;
}

export interface EditLimits {
  lower: number;
  upper: number;
  m_t: number;
  m_not_t: number;
}

export type Position = "long" | "short" | "neutral";

export interface PreviewResponse {
  current_conditional: number;
  limits: EditLimits;
  exp_score_if_true: number;
  exp_score_if_false: number;
  position: Position;
}

export interface RegisterResponse {
  id: string;
  expected_score: number;
}

/** Joint states are reported as full assignments, variable name to state. */
export type JointState = Record<string, string>;

export interface AssetsResponse {
  id: string;
  expected_score: number;
  min_q: number;
  min_score: number;
  min_states: JointState[];
  truncated: boolean;
}

export interface TradeRecordInfo {
  seq: number;
  time: number;
  user: string;
  target: string;
  target_state: string;
  assumptions: Record<string, string>;
  old_p: number;
  new_p: number;
}

export interface TradeAccepted {
  accepted: true;
  marginals: Record<string, number[]>;
  expected_score: number;
  min_q: number;
  min_score: number;
  min_states: JointState[];
  truncated: boolean;
  record: TradeRecordInfo;
}

export interface TradesResponse {
  trades: TradeRecordInfo[];
  seq: number;
}

/**
 * Body of a non-2xx trade or preview response, normalized by the client.
 * `lower`/`upper` are present on out-of-limits rejections and carry the
 * limits as they stand now, not as they were previewed.
 */
export interface Rejection {
  reason: string;
  detail: string;
  lower?: number;
  upper?: number;
}

/** An edit being composed: target variable, state, same-clique assumptions. */
export interface EditRequest {
  target: string;
  target_state: string;
  assumptions: Record<string, string>;
}
