// Session client: handshake, message dispatch and decision sending.
// The socket is injected behind a minimal interface so tests can drive the
// client with a scripted fake while the browser passes a real WebSocket.

import {
  ClientMessage,
  EpisodeEndMessage,
  ServerMessage,
  SessionSummaryMessage,
  TickMessage,
  encodeClientMessage,
  parseServerMessage,
} from "./protocol.js";
import { SceneModel, sceneFromTick } from "./scene.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
}

export interface EpisodeRow {
  episode: number;
  termination: string;
  steps: number;
  // Simulation time of the tick the decision was attributed to, if any.
  decisionT: number | null;
}

export type ClientStatus = "connecting" | "running" | "done" | "aborted";

export interface ClientEvents {
  onScene?: (scene: SceneModel) => void;
  onEpisode?: (row: EpisodeRow) => void;
  onSummary?: (summary: SessionSummaryMessage) => void;
  onStatus?: (status: ClientStatus, detail?: string) => void;
}

export interface SessionOptions {
  driverId: string;
  seed: number;
  episodes: number;
}

export class DilClient {
  status: ClientStatus = "connecting";
  scene: SceneModel | null = null;
  episodes: EpisodeRow[] = [];
  summary: SessionSummaryMessage | null = null;

  private socket: SocketLike | null = null;
  private pendingDecision = false;
  private prevTickT: number | null = null;
  private lastTickT: number | null = null;

  constructor(private options: SessionOptions, private events: ClientEvents = {}) {}

  attach(socket: SocketLike): void {
    this.socket = socket;
  }

  handleOpen(): void {
    this.sendRaw({
      type: "start",
      driver_id: this.options.driverId,
      seed: this.options.seed,
      episodes: this.options.episodes,
    });
    this.setStatus("running");
  }

  handleRaw(raw: string): void {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(raw);
    } catch (err) {
      this.abort(String(err));
      return;
    }
    this.handleMessage(msg);
  }

  handleMessage(msg: ServerMessage): void {
    switch (msg.type) {
      case "tick":
        this.prevTickT = this.lastTickT;
        this.lastTickT = msg.t;
        this.scene = sceneFromTick(msg);
        this.events.onScene?.(this.scene);
        break;
      case "episode_end":
        this.finishEpisode(msg);
        break;
      case "session_summary":
        this.summary = msg;
        this.setStatus("done");
        this.events.onSummary?.(msg);
        break;
      case "error":
        this.abort(msg.reason);
        break;
    }
  }

  handleClose(): void {
    if (this.status === "running" || this.status === "connecting") {
      this.abort("connection closed");
    }
  }

  // One lane_change per keypress; further presses are ignored until the
  // episode resolves.
  requestLaneChange(): boolean {
    if (this.status !== "running" || this.pendingDecision) {
      return false;
    }
    this.pendingDecision = true;
    this.sendRaw({ type: "lane_change" });
    return true;
  }

  stop(): void {
    if (this.status === "running") {
      this.sendRaw({ type: "stop" });
    }
  }

  private finishEpisode(msg: EpisodeEndMessage): void {
    const decided = msg.termination === "changed";
    this.episodes.push({
      episode: msg.episode,
      termination: msg.termination,
      steps: msg.steps,
      // The server attributes a keypress to the tick after the one last
      // seen; episode_end.steps is that final tick's index.
      decisionT: decided ? msg.steps * this.tickPeriod() : null,
    });
    this.pendingDecision = false;
    this.prevTickT = null;
    this.lastTickT = null;
    this.events.onEpisode?.(this.episodes[this.episodes.length - 1]);
  }

  private tickPeriod(): number {
    if (this.prevTickT !== null && this.lastTickT !== null) {
      const dt = this.lastTickT - this.prevTickT;
      if (dt > 0) {
        return dt;
      }
    }
    return 0.1;
  }

  private abort(reason: string): void {
    if (this.status === "aborted" || this.status === "done") {
      return;
    }
    this.setStatus("aborted", reason);
    try {
      this.socket?.close();
    } catch {
      // already closed
    }
    this.socket = null;
  }

  private setStatus(status: ClientStatus, detail?: string): void {
    this.status = status;
    this.events.onStatus?.(status, detail);
  }

  private sendRaw(msg: ClientMessage): void {
    if (!this.socket) {
      return;
    }
    this.socket.send(encodeClientMessage(msg));
  }
}

export function connect(
  host: string,
  port: number,
  options: SessionOptions,
  events: ClientEvents = {},
): DilClient {
  const client = new DilClient(options, events);
  const ws = new WebSocket(`ws://${host}:${port}`);
  client.attach({ send: (d) => ws.send(d), close: () => ws.close() });
  ws.onopen = () => client.handleOpen();
  ws.onmessage = (event) => client.handleRaw(String(event.data));
  ws.onclose = () => client.handleClose();
  ws.onerror = () => client.handleClose();
  return client;
}
