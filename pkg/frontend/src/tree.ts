/**
 * Reasoning-tree renderer.
 *
 * Lays the trace out as a tidy layered tree read left-to-right: the intent
 * root in the first column, its top-level picks in the next, their children
 * in the last. Structure and scores come verbatim from the server trace —
 * nothing is recomputed here — so the trace is validated up front and a
 * malformed one raises `TraceFormatError` for the caller to surface.
 */

import type { TraceNode, TraceTree } from "./types.js";

/** The trace does not describe a well-formed two-level tree. */
export class TraceFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "TraceFormatError";
  }
}

/** Hover/focus hooks so the shell can attach entity cards. */
export interface TreeHooks {
  onEnter?: (entityId: number, anchor: HTMLElement) => void;
  onLeave?: () => void;
}

interface Branch {
  node: TraceNode;
  children: Branch[];
}

/**
 * Validate a trace and resolve its parent indices into a hierarchy.
 * Nodes arrive in pre-order, so every parent index points at an earlier
 * entry; anything else is malformed.
 */
export function buildBranches(tree: TraceTree): Branch[] {
  if (!tree || typeof tree.intent !== "string" || !Array.isArray(tree.nodes)) {
    throw new TraceFormatError("trace is missing intent or nodes");
  }
  const branches: Branch[] = [];
  const roots: Branch[] = [];
  tree.nodes.forEach((node, index) => {
    if (
      !node ||
      !Number.isInteger(node.entity) ||
      typeof node.score !== "number" ||
      !Number.isFinite(node.score) ||
      typeof node.name !== "string" ||
      typeof node.mentioned_before !== "boolean"
    ) {
      throw new TraceFormatError(`node ${index} is malformed`);
    }
    if (node.depth !== 1 && node.depth !== 2) {
      throw new TraceFormatError(`node ${index} has depth ${node.depth}`);
    }
    const branch: Branch = { node, children: [] };
    if (node.parent === null) {
      if (node.depth !== 1) {
        throw new TraceFormatError(`node ${index} has no parent but depth ${node.depth}`);
      }
      roots.push(branch);
    } else {
      const parent = Number.isInteger(node.parent)
        ? branches[node.parent as number]
        : undefined;
      if (parent === undefined || (node.parent as number) >= index) {
        throw new TraceFormatError(`node ${index} has invalid parent ${node.parent}`);
      }
      if (parent.node.depth !== node.depth - 1) {
        throw new TraceFormatError(`node ${index} skips a level`);
      }
      parent.children.push(branch);
    }
    branches.push(branch);
  });
  return roots;
}

/**
 * Render a validated trace. The intent root doubles as the collapse
 * toggle; entity picks are the `.tree-node` elements, so their count
 * always equals `tree.nodes.length`. An empty trace (e.g. a bare Chat
 * act) renders the intent badge alone.
 */
export function renderTree(tree: TraceTree, hooks: TreeHooks = {}): HTMLElement {
  const roots = buildBranches(tree);
  const details = document.createElement("details");
  details.className = "tree";
  details.open = true;

  const summary = document.createElement("summary");
  summary.className = "tree__root";
  summary.appendChild(renderIntentBadge(tree.intent));
  details.appendChild(summary);

  if (roots.length > 0) {
    details.appendChild(renderChildren(roots, hooks));
  }
  return details;
}

export function renderIntentBadge(intent: string): HTMLElement {
  const badge = document.createElement("span");
  const kind = intent.toLowerCase();
  badge.className = `intent-badge intent-badge--${kind}`;
  badge.textContent = intent;
  return badge;
}

function renderChildren(branches: Branch[], hooks: TreeHooks): HTMLElement {
  const column = document.createElement("div");
  column.className = "tree__children";
  for (const branch of branches) {
    column.appendChild(renderBranch(branch, hooks));
  }
  return column;
}

function renderBranch(branch: Branch, hooks: TreeHooks): HTMLElement {
  const row = document.createElement("div");
  row.className = "tree__branch";
  row.appendChild(renderNode(branch.node, hooks));
  if (branch.children.length > 0) {
    row.appendChild(renderChildren(branch.children, hooks));
  }
  return row;
}

function renderNode(node: TraceNode, hooks: TreeHooks): HTMLElement {
  const el = document.createElement("div");
  const state = node.mentioned_before ? "mentioned" : "new";
  el.className = `tree-node tree-node--${state}`;
  el.dataset.entity = String(node.entity);
  el.dataset.depth = String(node.depth);
  el.tabIndex = 0;

  const name = document.createElement("span");
  name.className = "tree-node__name";
  name.textContent = node.name;
  el.appendChild(name);

  const score = document.createElement("span");
  score.className = "tree-node__score";
  score.textContent = node.score.toFixed(2);
  el.appendChild(score);

  if (hooks.onEnter) {
    const enter = () => hooks.onEnter?.(node.entity, el);
    const leave = () => hooks.onLeave?.();
    el.addEventListener("mouseenter", enter);
    el.addEventListener("focus", enter);
    el.addEventListener("mouseleave", leave);
    el.addEventListener("blur", leave);
  }
  return el;
}
