/**
 * Chat shell: session lifecycle, composer, transcript, and export.
 *
 * One session per browser tab (the id lives in sessionStorage) and at most
 * one in-flight message — the composer is disabled while a reply is
 * pending. On reload the transcript is rebuilt from the server log, so its
 * order is the server's order. A transport failure leaves the session
 * intact and offers a retry for the unsent message.
 */

import { ApiError, NetworkError } from "./api.js";
import { entityCardHooks, renderErrorCard, renderTurn, turnFromGreeting, turnFromMessage, turnFromUser, turnsFromLog } from "./turn.js";
import type { TreeHooks } from "./tree.js";
import type {
  EntityInfo,
  MessageResult,
  SessionInfo,
  SessionLog,
  TurnView,
} from "./types.js";

/** What the shell needs from the API client (EngineApi satisfies this). */
export interface EngineClient {
  createSession(): Promise<SessionInfo>;
  sendMessage(sessionId: string, text: string): Promise<MessageResult>;
  fetchLog(sessionId: string): Promise<SessionLog>;
  fetchEntity(entityId: number): Promise<EntityInfo>;
}

export interface AppOptions {
  /** Where the session id is kept; defaults to sessionStorage (per tab). */
  storage?: Storage;
  /** File-download hook; defaults to a Blob + anchor click. */
  download?: (filename: string, payload: string) => void;
}

const SESSION_KEY = "convrec.session";

export class ChatApp {
  private readonly storage: Storage;
  private readonly download: (filename: string, payload: string) => void;
  private readonly hooks: TreeHooks;

  private sessionId: string | null = null;
  private pending = false;

  private transcript!: HTMLElement;
  private form!: HTMLFormElement;
  private input!: HTMLInputElement;
  private sendButton!: HTMLButtonElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: EngineClient,
    options: AppOptions = {},
  ) {
    this.storage = options.storage ?? window.sessionStorage;
    this.download = options.download ?? downloadViaAnchor;
    this.hooks = entityCardHooks((id) => this.api.fetchEntity(id));
  }

  /** Build the UI and attach to a session: restored if possible, else new. */
  async boot(): Promise<void> {
    this.renderScaffold();
    const stored = this.storage.getItem(SESSION_KEY);
    if (stored !== null && (await this.restoreSession(stored))) {
      return;
    }
    await this.startSession();
  }

  /**
   * Submit one user message. Ignored while another message is pending —
   * the composer is disabled, but tests may call this directly.
   */
  async send(text: string): Promise<void> {
    const trimmed = text.trim();
    if (trimmed === "" || this.pending || this.sessionId === null) {
      return;
    }
    this.appendTurn(turnFromUser(trimmed));
    await this.deliver(trimmed);
  }

  // ── session lifecycle ────────────────────────────────────────────────────

  private async restoreSession(sessionId: string): Promise<boolean> {
    let log: SessionLog;
    try {
      log = await this.api.fetchLog(sessionId);
    } catch (error) {
      if (error instanceof ApiError || error instanceof NetworkError) {
        return false;
      }
      throw error;
    }
    this.sessionId = sessionId;
    for (const turn of turnsFromLog(log.turns)) {
      this.appendTurn(turn);
    }
    return true;
  }

  private async startSession(): Promise<void> {
    try {
      const session = await this.api.createSession();
      this.sessionId = session.id;
      this.storage.setItem(SESSION_KEY, session.id);
      this.appendTurn(turnFromGreeting(session.greeting));
    } catch {
      const card = renderErrorCard("The engine is unreachable.");
      card.appendChild(this.retryButton(() => void this.startSession()));
      this.transcript.appendChild(card);
    }
  }

  // ── message delivery ─────────────────────────────────────────────────────

  /** Send `text` for an already-rendered user bubble (first try or retry). */
  private async deliver(text: string): Promise<void> {
    this.setPending(true);
    try {
      const result = await this.api.sendMessage(this.sessionId!, text);
      this.appendTurn(turnFromMessage(result));
    } catch (error) {
      this.appendDeliveryError(error, text);
    } finally {
      this.setPending(false);
      this.input.focus();
    }
  }

  private appendDeliveryError(error: unknown, text: string): void {
    let card: HTMLElement;
    if (error instanceof NetworkError) {
      card = renderErrorCard("Message not delivered — the engine is unreachable.");
      card.appendChild(
        this.retryButton(() => {
          card.remove();
          void this.deliver(text);
        }),
      );
    } else if (error instanceof ApiError && error.status === 404) {
      // The session idled out server-side; a fresh one keeps the chat usable.
      card = renderErrorCard("This session expired; starting a new one.");
      this.sessionId = null;
      this.storage.removeItem(SESSION_KEY);
      void this.startSession();
    } else if (error instanceof ApiError) {
      card = renderErrorCard(`The engine rejected the message: ${error.message}`);
    } else {
      throw error;
    }
    this.transcript.appendChild(card);
    this.scrollToEnd();
  }

  private retryButton(onClick: () => void): HTMLButtonElement {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "error-card__retry";
    button.textContent = "Retry";
    button.addEventListener("click", onClick);
    return button;
  }

  // ── DOM ──────────────────────────────────────────────────────────────────

  private renderScaffold(): void {
    this.root.textContent = "";

    const shell = document.createElement("div");
    shell.className = "chat";

    const header = document.createElement("header");
    header.className = "chat__header";
    const title = document.createElement("div");
    title.className = "chat__title";
    title.textContent = "convrec";
    header.appendChild(title);
    const exportButton = document.createElement("button");
    exportButton.type = "button";
    exportButton.className = "chat__export";
    exportButton.textContent = "Export transcript";
    exportButton.addEventListener("click", () => void this.exportTranscript());
    header.appendChild(exportButton);
    shell.appendChild(header);

    this.transcript = document.createElement("main");
    this.transcript.className = "chat__transcript";
    shell.appendChild(this.transcript);

    this.form = document.createElement("form");
    this.form.className = "chat__composer";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.className = "chat__input";
    this.input.placeholder = "Ask for something to watch…";
    this.input.autocomplete = "off";
    this.form.appendChild(this.input);
    this.sendButton = document.createElement("button");
    this.sendButton.type = "submit";
    this.sendButton.className = "chat__send";
    this.sendButton.textContent = "Send";
    this.form.appendChild(this.sendButton);
    shell.appendChild(this.form);

    this.form.addEventListener("submit", (event) => {
      event.preventDefault();
      this.submitComposer();
    });
    this.input.addEventListener("keydown", (event) => {
      if (event.key === "Enter") {
        event.preventDefault();
        this.submitComposer();
      }
    });

    this.root.appendChild(shell);
  }

  private submitComposer(): void {
    const text = this.input.value;
    if (text.trim() === "" || this.pending) {
      return;
    }
    this.input.value = "";
    void this.send(text);
  }

  private appendTurn(turn: TurnView): void {
    this.transcript.appendChild(renderTurn(turn, { entityHooks: this.hooks }));
    this.scrollToEnd();
  }

  private setPending(pending: boolean): void {
    this.pending = pending;
    this.input.disabled = pending;
    this.sendButton.disabled = pending;
  }

  private scrollToEnd(): void {
    this.transcript.scrollTop = this.transcript.scrollHeight;
  }

  // ── transcript export ────────────────────────────────────────────────────

  private async exportTranscript(): Promise<void> {
    if (this.sessionId === null) {
      return;
    }
    try {
      const log = await this.api.fetchLog(this.sessionId);
      this.download(
        `transcript-${this.sessionId}.json`,
        JSON.stringify(log, null, 2),
      );
    } catch {
      this.transcript.appendChild(
        renderErrorCard("Could not fetch the transcript for export."),
      );
    }
  }
}

function downloadViaAnchor(filename: string, payload: string): void {
  const blob = new Blob([payload], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  document.body.appendChild(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
