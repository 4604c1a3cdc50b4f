// Wire schema shared with the session server: one newline-terminated JSON
// object per message.

export interface CarInfo {
  x: number;
  v: number;
}

export interface TickMessage {
  type: "tick";
  t: number;
  episode: number;
  ego: CarInfo;
  f: CarInfo;
  nf: CarInfo | null;
  nb: CarInfo;
  indicators: { tf: number; tnf: number; dvnb: number };
}

export interface EpisodeEndMessage {
  type: "episode_end";
  episode: number;
  termination: string;
  steps: number;
}

export interface SessionSummaryMessage {
  type: "session_summary";
  session_id: string;
  driver_id: string;
  status: string;
  episodes_completed: number;
  change_count: number;
  log_path: string | null;
}

export interface ErrorMessage {
  type: "error";
  reason: string;
}

export type ServerMessage =
  | TickMessage
  | EpisodeEndMessage
  | SessionSummaryMessage
  | ErrorMessage;

export interface StartMessage {
  type: "start";
  driver_id: string;
  seed: number;
  episodes: number;
}

export type ClientMessage = StartMessage | { type: "lane_change" } | { type: "stop" };

const SERVER_TYPES = new Set(["tick", "episode_end", "session_summary", "error"]);

export function parseServerMessage(raw: string): ServerMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw.trim());
  } catch {
    throw new Error(`unparseable server message: ${raw.slice(0, 120)}`);
  }
  const msg = data as { type?: string };
  if (!msg || typeof msg.type !== "string" || !SERVER_TYPES.has(msg.type)) {
    throw new Error(`unexpected server message type: ${msg?.type}`);
  }
  return data as ServerMessage;
}

export function encodeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg) + "\n";
}
