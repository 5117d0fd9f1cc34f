/**
 * Wire types for the engine's HTTP API, plus the view model the chat
 * renders from.
 *
 * Field names mirror the JSON payloads exactly (snake_case where the
 * server uses it) so responses can be used without translation — the UI
 * displays reasoning traces verbatim and never recomputes them.
 */

export type Role = "user" | "system";

/** One selected entity in a turn's reasoning trace (pre-order). */
export interface TraceNode {
  /** Entity id in the knowledge graph. */
  entity: number;
  /** Index of the parent node within `nodes`, or null for a top-level pick. */
  parent: number | null;
  /** Hops below the intent root: 1 for top-level picks, 2 for their children. */
  depth: number;
  /** Walker confidence in [0, 1]; displayed to 2 decimals. */
  score: number;
  /** Display name resolved by the server. */
  name: string;
  /** True when the entity had already surfaced earlier in the dialog. */
  mentioned_before: boolean;
}

/** Reasoning trace for one system turn: intent root plus selected nodes. */
export interface TraceTree {
  intent: string;
  nodes: TraceNode[];
  elapsed?: number;
}

export interface Recommendation {
  id: number;
  name: string;
  score: number;
}

/** Response body of POST /api/session/{id}/message. */
export interface MessageResult {
  utterance: string;
  act: string;
  intent: string;
  intent_probs: number[];
  tree: TraceTree;
  recommendations: Recommendation[];
}

/** Response body of POST /api/session. */
export interface SessionInfo {
  id: string;
  greeting: string;
}

/**
 * One entry of GET /api/session/{id}/log. Responding system turns carry
 * the trace; the greeting entry carries explicit nulls instead.
 */
export interface LogTurn {
  role: Role;
  text: string;
  entities?: number[];
  act?: string | null;
  intent?: string | null;
  tree?: TraceTree | null;
  recommendations?: Recommendation[] | null;
}

export interface SessionLog {
  session: string;
  turns: LogTurn[];
}

export interface EntityNeighbor {
  id: number;
  name: string;
  kind: string;
}

/** Response body of GET /api/graph/entity/{id}; feeds hover cards. */
export interface EntityInfo {
  id: number;
  name: string;
  kind: string;
  aliases: string[];
  neighbors: EntityNeighbor[];
}

/**
 * What one transcript bubble renders. System turns carry the served act
 * string and trace; user turns (and the greeting) carry neither.
 *
 * Invariants: the rendered tree has exactly `tree.nodes.length` entity
 * nodes; every score is shown to 2 decimals.
 */
export interface TurnView {
  role: Role;
  utterance: string;
  act: string;
  tree: TraceTree | null;
  recommendations: Recommendation[];
}
