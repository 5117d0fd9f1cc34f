/**
 * Turn rendering: one transcript bubble per dialog turn, with the system
 * side carrying its intent badge, collapsible reasoning tree, served act
 * string, and ranked candidates.
 *
 * Entities already surfaced earlier in the dialog are styled distinctly
 * from newly selected ones (see `.tree-node--mentioned` / `--new`), and
 * hovering a node shows the entity's graph neighborhood fetched from
 * /api/graph/entity. A malformed trace degrades to an error card; the
 * conversation itself is unaffected.
 */

import { TraceFormatError, renderTree, type TreeHooks } from "./tree.js";
import type {
  EntityInfo,
  LogTurn,
  MessageResult,
  Recommendation,
  TurnView,
} from "./types.js";

export interface TurnDeps {
  /** Hover/focus hooks for entity nodes; see `entityCardHooks`. */
  entityHooks?: TreeHooks;
}

/** Render one turn as a DOM subtree ready to append to the transcript. */
export function renderTurn(turn: TurnView, deps: TurnDeps = {}): HTMLElement {
  const article = document.createElement("article");
  article.className = `turn turn--${turn.role}`;

  const bubble = document.createElement("div");
  bubble.className = `bubble bubble--${turn.role}`;
  bubble.textContent = turn.utterance;
  article.appendChild(bubble);

  if (turn.role === "system" && turn.tree !== null) {
    article.appendChild(renderReasoning(turn, deps));
  }
  if (turn.recommendations.length > 0) {
    article.appendChild(renderRecommendations(turn.recommendations));
  }
  return article;
}

function renderReasoning(turn: TurnView, deps: TurnDeps): HTMLElement {
  const section = document.createElement("div");
  section.className = "turn__reason";
  try {
    section.appendChild(renderTree(turn.tree!, deps.entityHooks ?? {}));
  } catch (error) {
    if (!(error instanceof TraceFormatError)) {
      throw error;
    }
    section.appendChild(
      renderErrorCard("The reasoning trace for this turn could not be displayed."),
    );
    return section;
  }
  if (turn.act) {
    const act = document.createElement("code");
    act.className = "turn__act";
    act.textContent = turn.act;
    section.appendChild(act);
  }
  return section;
}

export function renderErrorCard(message: string): HTMLElement {
  const card = document.createElement("div");
  card.className = "error-card";
  card.setAttribute("role", "alert");
  card.textContent = message;
  return card;
}

function renderRecommendations(recommendations: Recommendation[]): HTMLElement {
  const details = document.createElement("details");
  details.className = "turn__recs";

  const summary = document.createElement("summary");
  summary.textContent = `ranked candidates (${recommendations.length})`;
  details.appendChild(summary);

  const list = document.createElement("ol");
  list.className = "recs";
  for (const rec of recommendations) {
    const item = document.createElement("li");
    item.className = "recs__item";

    const name = document.createElement("span");
    name.className = "recs__name";
    name.textContent = rec.name;
    item.appendChild(name);

    const score = document.createElement("span");
    score.className = "recs__score";
    score.textContent = rec.score.toFixed(2);
    item.appendChild(score);

    list.appendChild(item);
  }
  details.appendChild(list);
  return details;
}

// ── View-model construction ────────────────────────────────────────────────

export function turnFromUser(text: string): TurnView {
  return { role: "user", utterance: text, act: "", tree: null, recommendations: [] };
}

/** The session greeting is a plain system bubble: no act, no trace. */
export function turnFromGreeting(greeting: string): TurnView {
  return { role: "system", utterance: greeting, act: "", tree: null, recommendations: [] };
}

export function turnFromMessage(result: MessageResult): TurnView {
  return {
    role: "system",
    utterance: result.utterance,
    act: result.act,
    tree: result.tree,
    recommendations: result.recommendations,
  };
}

/** Rebuild the transcript from the server log, preserving its order. */
export function turnsFromLog(turns: LogTurn[]): TurnView[] {
  return turns.map((turn) =>
    turn.role === "user"
      ? turnFromUser(turn.text)
      : {
          role: "system" as const,
          utterance: turn.text,
          act: turn.act ?? "",
          tree: turn.tree ?? null,
          recommendations: turn.recommendations ?? [],
        },
  );
}

// ── Entity hover cards ─────────────────────────────────────────────────────

/**
 * Build tree hooks that show a small card with the hovered entity's name,
 * kind, and graph neighbors. Lookups are cached per entity; stale
 * responses (the pointer already moved on) are dropped.
 */
export function entityCardHooks(
  fetchEntity: (entityId: number) => Promise<EntityInfo>,
  host: HTMLElement = document.body,
): TreeHooks {
  const cache = new Map<number, Promise<EntityInfo>>();
  let card: HTMLElement | null = null;
  let token = 0;

  const clear = () => {
    card?.remove();
    card = null;
  };

  return {
    onEnter(entityId, anchor) {
      token += 1;
      const mine = token;
      let lookup = cache.get(entityId);
      if (!lookup) {
        lookup = fetchEntity(entityId);
        cache.set(entityId, lookup);
      }
      lookup
        .then((info) => {
          if (mine !== token) {
            return;
          }
          clear();
          card = buildEntityCard(info);
          const rect = anchor.getBoundingClientRect();
          card.style.left = `${rect.left + window.scrollX}px`;
          card.style.top = `${rect.bottom + window.scrollY + 6}px`;
          host.appendChild(card);
        })
        .catch(() => {
          cache.delete(entityId);
        });
    },
    onLeave() {
      token += 1;
      clear();
    },
  };
}

const NEIGHBOR_CARD_LIMIT = 8;

function buildEntityCard(info: EntityInfo): HTMLElement {
  const card = document.createElement("div");
  card.className = "entity-card";

  const title = document.createElement("div");
  title.className = "entity-card__title";
  title.textContent = info.name;
  card.appendChild(title);

  const kind = document.createElement("div");
  kind.className = "entity-card__kind";
  kind.textContent = info.kind;
  card.appendChild(kind);

  if (info.neighbors.length > 0) {
    const list = document.createElement("ul");
    list.className = "entity-card__neighbors";
    for (const neighbor of info.neighbors.slice(0, NEIGHBOR_CARD_LIMIT)) {
      const item = document.createElement("li");
      item.textContent = neighbor.name;
      list.appendChild(item);
    }
    if (info.neighbors.length > NEIGHBOR_CARD_LIMIT) {
      const more = document.createElement("li");
      more.className = "entity-card__more";
      more.textContent = `+${info.neighbors.length - NEIGHBOR_CARD_LIMIT} more`;
      list.appendChild(more);
    }
    card.appendChild(list);
  }
  return card;
}
