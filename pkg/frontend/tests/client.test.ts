import { describe, expect, it } from "vitest";

import { DilClient, SocketLike } from "../src/client.js";
import { encodeClientMessage, ServerMessage } from "../src/protocol.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }

  sentTypes(): string[] {
    return this.sent.map((raw) => JSON.parse(raw).type);
  }
}

const DT = 0.1;

/** Scripted stand-in for the session server: advances one tick per step()
 * and applies the one-tick attribution rule, ending the episode at tick
 * k+1 when a lane_change arrived after tick k. */
class FakeServer {
  tickIndex = 0;
  episode = 1;
  private pendingChange = false;

  constructor(private client: DilClient, private socket: FakeSocket) {}

  deliver(msg: ServerMessage): void {
    this.client.handleMessage(msg);
  }

  start(): void {
    this.deliver(this.tick(0));
  }

  private tick(index: number): ServerMessage {
    return {
      type: "tick", t: index * DT, episode: this.episode,
      ego: { x: 0, v: 20 },
      f: { x: 50 - index * 0.5, v: 15 },
      nf: { x: 60 - index * 0.4, v: 16 },
      nb: { x: -30, v: 12 },
      indicators: { tf: 10 - index * DT, tnf: 11 - index * DT, dvnb: 8 },
    };
  }

  step(): void {
    const changeRequested = this.socket.sent
      .map((raw) => JSON.parse(raw))
      .filter((msg) => msg.type === "lane_change").length > 0 && !this.pendingChange;
    this.tickIndex += 1;
    if (changeRequested) {
      this.pendingChange = true;
      this.deliver({
        type: "episode_end", episode: this.episode,
        termination: "changed", steps: this.tickIndex,
      });
      return;
    }
    this.deliver(this.tick(this.tickIndex));
  }
}

function makeClient(events = {}) {
  const socket = new FakeSocket();
  const client = new DilClient({ driverId: "t", seed: 1, episodes: 3 }, events);
  client.attach(socket);
  client.handleOpen();
  return { client, socket };
}

describe("DilClient", () => {
  it("handshakes with a start message", () => {
    const { socket } = makeClient();
    expect(socket.sentTypes()).toEqual(["start"]);
    const start = JSON.parse(socket.sent[0]);
    expect(start).toEqual({ type: "start", driver_id: "t", seed: 1, episodes: 3 });
    expect(socket.sent[0].endsWith("\n")).toBe(true);
  });

  it("renders only the data of the latest tick", () => {
    const { client } = makeClient();
    const server = new FakeServer(client, new FakeSocket());
    server.start();
    server.step();
    expect(client.scene?.t).toBeCloseTo(DT);
    expect(client.scene?.front?.x).toBeCloseTo(49.5);
  });

  it("sends exactly one lane_change per keypress (debounced)", () => {
    const { client, socket } = makeClient();
    const server = new FakeServer(client, socket);
    server.start();
    expect(client.requestLaneChange()).toBe(true);
    expect(client.requestLaneChange()).toBe(false);
    expect(client.requestLaneChange()).toBe(false);
    const changes = socket.sentTypes().filter((t) => t === "lane_change");
    expect(changes).toHaveLength(1);
  });

  it("attributes a keypress between ticks k and k+1 to tick k+1", () => {
    const { client, socket } = makeClient();
    const server = new FakeServer(client, socket);
    server.start();
    for (let i = 0; i < 37; i += 1) {
      server.step();
    }
    // Keypress lands between tick 37 and tick 38.
    expect(client.requestLaneChange()).toBe(true);
    server.step();
    expect(client.episodes).toHaveLength(1);
    const row = client.episodes[0];
    expect(row.termination).toBe("changed");
    expect(row.steps).toBe(38);
    expect(row.decisionT).toBeCloseTo(38 * DT, 10);
  });

  it("recovers the ability to decide in the next episode", () => {
    const { client, socket } = makeClient();
    const server = new FakeServer(client, socket);
    server.start();
    server.step();
    client.requestLaneChange();
    server.step();
    // New episode tick arrives; a fresh decision must be allowed.
    client.handleMessage({
      type: "tick", t: 0, episode: 2,
      ego: { x: 0, v: 21 }, f: { x: 40, v: 15 }, nf: null,
      nb: { x: -20, v: 11 }, indicators: { tf: 9, tnf: -1, dvnb: 10 },
    });
    expect(client.requestLaneChange()).toBe(true);
  });

  it("resynchronizes purely from a mid-session tick", () => {
    const { client } = makeClient();
    client.handleMessage({
      type: "tick", t: 7.5, episode: 4,
      ego: { x: 0, v: 24 }, f: { x: 31, v: 20 }, nf: { x: 44, v: 19 },
      nb: { x: -55, v: 14 }, indicators: { tf: 7.75, tnf: 8.8, dvnb: 10 },
    });
    expect(client.scene?.episode).toBe(4);
    expect(client.scene?.t).toBe(7.5);
  });

  it("finishes on session_summary", () => {
    const { client } = makeClient();
    client.handleMessage({
      type: "session_summary", session_id: "s", driver_id: "t",
      status: "completed", episodes_completed: 3, change_count: 2,
      log_path: "/tmp/x.jsonl",
    });
    expect(client.status).toBe("done");
    expect(client.summary?.change_count).toBe(2);
  });

  it("aborts on server error and closes the socket", () => {
    const { client, socket } = makeClient();
    client.handleMessage({ type: "error", reason: "malformed message" });
    expect(client.status).toBe("aborted");
    expect(socket.closed).toBe(true);
  });

  it("aborts on disconnect and sends nothing afterwards", () => {
    const { client, socket } = makeClient();
    const before = socket.sent.length;
    client.handleClose();
    expect(client.status).toBe("aborted");
    expect(client.requestLaneChange()).toBe(false);
    client.stop();
    expect(socket.sent.length).toBe(before);
  });

  it("keeps done state when the socket closes after the summary", () => {
    const { client } = makeClient();
    client.handleMessage({
      type: "session_summary", session_id: "s", driver_id: "t",
      status: "completed", episodes_completed: 3, change_count: 0, log_path: null,
    });
    client.handleClose();
    expect(client.status).toBe("done");
  });
});
