// Typed client for the game server's JSON API. Every mutation returns the
// authoritative session view; the UI never computes game rules locally.

export interface OutcomeView {
  black: number;
  white: number;
  score_text: string;
  adjusted_black?: number;
  adjusted_white?: number;
}

export interface SessionView {
  id: string;
  board: string; // 64 chars, 'b' | 'w' | '.', index = row * 8 + col, a1 = 0
  to_move: string | null;
  human_color: string;
  engine_color: string;
  legal_moves: string[];
  history: string;
  value_trace: number[];
  status: "ongoing" | "finished";
  winner: string | null;
  outcome: OutcomeView | null;
  resigned: boolean;
  sims: number;
  checkpoint: string;
}

export interface AnalysisView {
  pi: Record<string, number>;
  q: number;
  sims: number;
}

export interface ReplayView {
  board: string;
  to_move: string;
  terminal: boolean;
  outcome: OutcomeView | null;
}

export interface CheckpointList {
  checkpoints: string[];
  default: string | null;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    let parsed: unknown = null;
    try {
      parsed = text ? JSON.parse(text) : null;
    } catch {
      parsed = null;
    }
    if (!response.ok) {
      const detail =
        parsed && typeof parsed === "object" && "detail" in (parsed as object)
          ? String((parsed as { detail: unknown }).detail)
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return parsed as T;
  }

  createSession(humanColor: string, sims: number, checkpoint?: string): Promise<SessionView> {
    const body: Record<string, unknown> = { human_color: humanColor, sims };
    if (checkpoint) body.checkpoint = checkpoint;
    return this.request<SessionView>("POST", "/api/sessions", body);
  }

  getState(id: string): Promise<SessionView> {
    return this.request<SessionView>("GET", `/api/sessions/${id}`);
  }

  move(id: string, move: string): Promise<SessionView> {
    return this.request<SessionView>("POST", `/api/sessions/${id}/move`, { move });
  }

  analyze(id: string): Promise<AnalysisView> {
    return this.request<AnalysisView>("POST", `/api/sessions/${id}/analyze`);
  }

  resign(id: string): Promise<SessionView> {
    return this.request<SessionView>("POST", `/api/sessions/${id}/resign`);
  }

  replay(transcript: string): Promise<ReplayView> {
    return this.request<ReplayView>("POST", "/api/replay", { transcript });
  }

  checkpoints(): Promise<CheckpointList> {
    return this.request<CheckpointList>("GET", "/api/checkpoints");
  }
}

export function historyTokens(history: string): string[] {
  const tokens: string[] = [];
  for (let i = 0; i < history.length; i += 2) {
    tokens.push(history.slice(i, i + 2));
  }
  return tokens;
}

export function squareToken(row: number, col: number): string {
  return `${String.fromCharCode(65 + col)}${row + 1}`;
}
