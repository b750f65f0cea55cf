// Browser client for live play against the engine server. The server is
// the single rules authority: the board renders exactly the last view it
// returned, clicks are only accepted on server-listed legal squares, and a
// forced pass is surfaced as an explicit button, never auto-submitted.

import {
  AnalysisView,
  ApiClient,
  ApiError,
  SessionView,
  historyTokens,
  squareToken,
} from "./api.js";
import { ConfidenceGraph } from "./confidence.js";

export class OthelloApp {
  view: SessionView | null = null;
  pending: Promise<void> = Promise.resolve();
  requestCount = 0;

  private doc: Document;
  private setupPanel!: HTMLElement;
  private gamePanel!: HTMLElement;
  private boardEl!: HTMLElement;
  private historyEl!: HTMLElement;
  private statusEl!: HTMLElement;
  private passEl!: HTMLElement;
  private hintEl!: HTMLElement;
  private errorEl!: HTMLElement;
  private confidence!: ConfidenceGraph;
  private hints: AnalysisView | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {
    this.doc = root.ownerDocument;
    this.renderShell();
  }

  // ---- scaffolding ------------------------------------------------------

  private el(tag: string, className: string, text = ""): HTMLElement {
    const node = this.doc.createElement(tag);
    node.className = className;
    if (text) node.textContent = text;
    return node;
  }

  private renderShell(): void {
    this.root.innerHTML = "";
    this.setupPanel = this.el("div", "setup-panel");
    this.gamePanel = this.el("div", "game-panel hidden");
    this.errorEl = this.el("div", "error-banner hidden");
    this.root.appendChild(this.errorEl);
    this.root.appendChild(this.setupPanel);
    this.root.appendChild(this.gamePanel);
    this.renderSetup();

    this.boardEl = this.el("div", "board");
    this.statusEl = this.el("div", "status");
    this.passEl = this.el("div", "pass-prompt hidden");
    this.historyEl = this.el("ol", "history");
    this.hintEl = this.el("div", "hint-panel");
    this.confidence = new ConfidenceGraph(this.doc);

    const controls = this.el("div", "controls");
    const hintButton = this.el("button", "hint-button", "Hint") as HTMLButtonElement;
    hintButton.addEventListener("click", () => {
      this.pending = this.requestHint();
    });
    const resignButton = this.el("button", "resign-button", "Resign") as HTMLButtonElement;
    resignButton.addEventListener("click", () => {
      this.pending = this.resign();
    });
    const newGameButton = this.el("button", "new-game-button", "New game") as HTMLButtonElement;
    newGameButton.addEventListener("click", () => this.showSetup());
    controls.appendChild(hintButton);
    controls.appendChild(resignButton);
    controls.appendChild(newGameButton);

    this.gamePanel.appendChild(this.statusEl);
    this.gamePanel.appendChild(this.passEl);
    this.gamePanel.appendChild(this.boardEl);
    this.gamePanel.appendChild(controls);
    this.gamePanel.appendChild(this.confidence.element);
    this.gamePanel.appendChild(this.el("h3", "history-title", "Moves"));
    this.gamePanel.appendChild(this.historyEl);
    this.gamePanel.appendChild(this.hintEl);
  }

  private renderSetup(): void {
    this.setupPanel.innerHTML = "";
    this.setupPanel.appendChild(this.el("h2", "", "New game"));

    const colorLabel = this.el("label", "", "Play as ");
    const colorSelect = this.doc.createElement("select");
    colorSelect.className = "color-select";
    for (const color of ["black", "white"]) {
      const option = this.doc.createElement("option");
      option.value = color;
      option.textContent = color;
      colorSelect.appendChild(option);
    }
    colorLabel.appendChild(colorSelect);

    const simsLabel = this.el("label", "", " Simulations per move ");
    const simsInput = this.doc.createElement("input");
    simsInput.className = "sims-input";
    simsInput.setAttribute("type", "number");
    simsInput.value = "1000";
    simsLabel.appendChild(simsInput);

    const checkpointLabel = this.el("label", "", " Engine ");
    const checkpointSelect = this.doc.createElement("select");
    checkpointSelect.className = "checkpoint-select";
    checkpointLabel.appendChild(checkpointSelect);
    void this.api
      .checkpoints()
      .then((list) => {
        checkpointSelect.innerHTML = "";
        if (!list.checkpoints.length) {
          const option = this.doc.createElement("option");
          option.value = "";
          option.textContent = "default";
          checkpointSelect.appendChild(option);
          return;
        }
        for (const name of list.checkpoints) {
          const option = this.doc.createElement("option");
          option.value = name;
          option.textContent = name;
          if (name === list.default) option.setAttribute("selected", "selected");
          checkpointSelect.appendChild(option);
        }
      })
      .catch(() => {
        checkpointSelect.innerHTML = "<option value=''>default</option>";
      });

    const start = this.el("button", "start-button", "Start") as HTMLButtonElement;
    start.addEventListener("click", () => {
      this.pending = this.startGame(
        colorSelect.value,
        parseInt(simsInput.value, 10) || 1000,
        checkpointSelect.value || undefined,
      );
    });

    this.setupPanel.appendChild(colorLabel);
    this.setupPanel.appendChild(simsLabel);
    this.setupPanel.appendChild(checkpointLabel);
    this.setupPanel.appendChild(start);
  }

  private showSetup(): void {
    this.view = null;
    this.setupPanel.classList.remove("hidden");
    this.gamePanel.classList.add("hidden");
  }

  // ---- actions ----------------------------------------------------------

  async startGame(color: string, sims: number, checkpoint?: string): Promise<void> {
    await this.guard(async () => {
      this.view = await this.api.createSession(color, sims, checkpoint);
      this.hints = null;
      this.setupPanel.classList.add("hidden");
      this.gamePanel.classList.remove("hidden");
      this.render();
    });
  }

  async clickSquare(token: string): Promise<void> {
    const view = this.view;
    // Client-side gate: only server-highlighted squares produce a request.
    if (!view || view.status !== "ongoing" || !view.legal_moves.includes(token)) {
      return;
    }
    await this.submitMove(token);
  }

  async submitMove(token: string): Promise<void> {
    const view = this.view;
    if (!view) return;
    await this.guard(async () => {
      this.view = await this.api.move(view.id, token);
      this.hints = null;
      this.render();
    });
  }

  async requestHint(): Promise<void> {
    const view = this.view;
    if (!view || view.status !== "ongoing") return;
    await this.guard(async () => {
      this.hints = await this.api.analyze(view.id);
      this.render();
    });
  }

  async resign(): Promise<void> {
    const view = this.view;
    if (!view || view.status !== "ongoing") return;
    await this.guard(async () => {
      this.view = await this.api.resign(view.id);
      this.render();
    });
  }

  async refresh(): Promise<void> {
    const view = this.view;
    if (!view) return;
    await this.guard(async () => {
      this.view = await this.api.getState(view.id);
      this.render();
    });
  }

  private async guard(action: () => Promise<void>): Promise<void> {
    this.requestCount += 1;
    try {
      await action();
      this.errorEl.classList.add("hidden");
      this.errorEl.textContent = "";
    } catch (err) {
      // Non-destructive: the last good view stays on screen, with a retry hint.
      const detail = err instanceof ApiError ? err.message : `network error: ${err}`;
      this.errorEl.textContent = `${detail} — your last position is still shown; try again.`;
      this.errorEl.classList.remove("hidden");
    }
  }

  // ---- rendering --------------------------------------------------------

  render(): void {
    const view = this.view;
    if (!view) return;
    this.renderStatus(view);
    this.renderBoard(view);
    this.renderHistory(view);
    this.confidence.render(view.value_trace);
    this.renderHints();
  }

  private renderStatus(view: SessionView): void {
    if (view.status === "finished") {
      let text: string;
      if (view.resigned) {
        text = `You resigned — ${view.winner} (engine) wins.`;
      } else if (view.outcome) {
        const score = view.outcome.score_text;
        text =
          view.winner === null
            ? `Draw ${score}`
            : `${view.winner} wins ${score}`;
      } else {
        text = "Game over";
      }
      this.statusEl.textContent = `Final: ${text}`;
      this.statusEl.classList.add("final-banner");
      this.passEl.classList.add("hidden");
      return;
    }
    this.statusEl.classList.remove("final-banner");
    const yourTurn = view.to_move === view.human_color;
    this.statusEl.textContent = yourTurn
      ? `Your move (${view.human_color}).`
      : `Engine (${view.engine_color}) is thinking…`;
    const forcedPass = yourTurn && view.legal_moves.length === 1 && view.legal_moves[0] === "PA";
    if (forcedPass) {
      this.passEl.innerHTML = "";
      this.passEl.appendChild(
        this.el("span", "", "No legal move: you must pass. "),
      );
      const passButton = this.el("button", "pass-button", "Pass") as HTMLButtonElement;
      passButton.addEventListener("click", () => {
        this.pending = this.submitMove("PA");
      });
      this.passEl.appendChild(passButton);
      this.passEl.classList.remove("hidden");
    } else {
      this.passEl.classList.add("hidden");
      this.passEl.innerHTML = "";
    }
  }

  private renderBoard(view: SessionView): void {
    this.boardEl.innerHTML = "";
    const legal = new Set(view.status === "ongoing" ? view.legal_moves : []);
    const humanTurn = view.to_move === view.human_color;
    // a1 bottom-left: render rank 8 (row 7) first.
    for (let row = 7; row >= 0; row--) {
      for (let col = 0; col < 8; col++) {
        const token = squareToken(row, col);
        const cellState = view.board[row * 8 + col];
        const cell = this.el("div", "cell");
        cell.setAttribute("data-square", token);
        if (cellState === "b" || cellState === "w") {
          cell.appendChild(
            this.el("div", `disc ${cellState === "b" ? "black" : "white"}`),
          );
        } else if (humanTurn && legal.has(token)) {
          cell.classList.add("legal");
          cell.addEventListener("click", () => {
            this.pending = this.clickSquare(token);
          });
        }
        this.boardEl.appendChild(cell);
      }
    }
  }

  private renderHistory(view: SessionView): void {
    this.historyEl.innerHTML = "";
    for (const token of historyTokens(view.history)) {
      this.historyEl.appendChild(this.el("li", "history-token", token));
    }
  }

  private renderHints(): void {
    this.hintEl.innerHTML = "";
    if (!this.hints) return;
    const q = this.hints.q;
    this.hintEl.appendChild(
      this.el(
        "div",
        "hint-q",
        `Search value for the side to move: ${q >= 0 ? "+" : ""}${q.toFixed(3)}`,
      ),
    );
    const ranked = Object.entries(this.hints.pi).sort((a, b) => b[1] - a[1]);
    for (const [token, weight] of ranked.slice(0, 5)) {
      this.hintEl.appendChild(
        this.el("div", "hint-move", `${token}: ${(weight * 100).toFixed(1)}%`),
      );
      const cell = this.boardEl.querySelector(`[data-square="${token}"]`);
      if (cell) cell.classList.add("hinted");
    }
  }
}
