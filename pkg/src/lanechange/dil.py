"""Driver-in-the-loop session server.

Streams simulation ticks to a connected client, receives the human's
lane-change keypresses, and writes DecisionRecord logs that feed straight
into the fitting pipeline. The session logic is a transport-agnostic state
machine; the transport is a WebSocket carrying one newline-terminated JSON
object per message, so browser clients and scripted clients share the same
wire format.

Attribution rule: inbound messages are queued and consumed at the next tick
boundary, after the scenario advances, so a keypress between ticks k and
k+1 is recorded against the tick k+1 snapshot (latency bounded by one
tick). Pacing pauses simulation time when the client lags; ticks are never
dropped.
"""
from __future__ import annotations

import asyncio
import json
import logging
import time
import uuid
from pathlib import Path
from typing import Optional

import numpy as np

from .indicators import DecisionRecord, compute_indicators, make_decision_record
from .simulation import (
    Action,
    Environment,
    ScenarioConfig,
    ScenarioState,
    Termination,
)

log = logging.getLogger(__name__)


def tick_payload(state: ScenarioState, episode: int, config: ScenarioConfig) -> dict:
    """Wire tick message; positions are ego-relative for rendering."""
    ind = compute_indicators(state, config)

    def rel(car):
        if car is None:
            return None
        return {"x": car.x - state.ego.x, "v": car.v}

    return {
        "type": "tick",
        "t": state.t,
        "episode": episode,
        "ego": {"x": 0.0, "v": state.ego.v},
        "f": rel(state.front),
        "nf": rel(state.target_front),
        "nb": rel(state.target_behind),
        "indicators": {"tf": ind.t_f, "tnf": ind.t_nf, "dvnb": ind.dv_nb},
    }


class SessionError(Exception):
    pass


class DilSession:
    """One driver's session: a sequence of episodes driven tick by tick."""

    def __init__(self, scenario: ScenarioConfig, log_dir: Optional[Path] = None,
                 default_episodes: int = 50, session_id: Optional[str] = None,
                 clock=time.time):
        scenario.validate()
        self.scenario = scenario
        self.log_dir = Path(log_dir) if log_dir is not None else None
        self.default_episodes = default_episodes
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.clock = clock

        self.status = "pending"
        self.driver_id = ""
        self.seed = 0
        self.episode_cap = default_episodes
        self.episode = 0
        self.episodes_completed = 0
        self.records: list[DecisionRecord] = []
        self.log_path: Optional[Path] = None
        self._env = Environment(scenario)
        self._rng: Optional[np.random.Generator] = None
        self._between_episodes = False

    # -- lifecycle --

    def handle_start(self, msg: dict) -> list[dict]:
        if self.status != "pending":
            raise SessionError("session already started")
        if msg.get("type") != "start":
            raise SessionError(f"expected a start message, got {msg.get('type')!r}")
        try:
            self.driver_id = str(msg["driver_id"])
            self.seed = int(msg.get("seed", 0))
            self.episode_cap = int(msg.get("episodes", self.default_episodes))
        except (KeyError, TypeError, ValueError) as exc:
            raise SessionError(f"malformed start message: {exc}") from exc
        if self.episode_cap <= 0:
            raise SessionError("episodes must be positive")
        self._rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        self.status = "running"
        return [self._begin_episode()]

    def _begin_episode(self) -> dict:
        self.episode += 1
        state = self._env.reset(self._rng)
        self._between_episodes = False
        return tick_payload(state, self.episode, self.scenario)

    def advance(self, queued: list[dict]) -> list[dict]:
        """Process one tick boundary: consume queued client messages, advance
        the scenario, and return the outgoing messages."""
        if self.status != "running":
            return []

        lane_change = False
        for msg in queued:
            kind = msg.get("type")
            if kind == "lane_change":
                lane_change = True
            elif kind == "stop":
                return self._finish("completed")
            else:
                self.abort()
                return [{"type": "error", "reason": f"unexpected message type {kind!r}"}]

        if self._between_episodes:
            # A keypress in the gap after episode_end belongs to no episode.
            return [self._begin_episode()]

        state, terminal, kind = self._env.step(Action.KEEP)
        if lane_change:
            self.records.append(make_decision_record(
                state, Action.CHANGE, self.scenario, self.driver_id, self.clock()))
            return self._end_episode(Termination.CHANGED)
        if terminal:
            return self._end_episode(kind)
        return [tick_payload(state, self.episode, self.scenario)]

    def _end_episode(self, kind: Termination) -> list[dict]:
        self.episodes_completed += 1
        self._between_episodes = True
        out = [{
            "type": "episode_end",
            "episode": self.episode,
            "termination": kind.value,
            "steps": self._env.state.step_index,
        }]
        if self.episodes_completed >= self.episode_cap:
            out.extend(self._finish("completed"))
        return out

    def _finish(self, status: str) -> list[dict]:
        self.status = status
        self.flush_log()
        return [self.summary()]

    def abort(self) -> None:
        if self.status == "running":
            self.status = "aborted"
            self.flush_log()

    def summary(self) -> dict:
        return {
            "type": "session_summary",
            "session_id": self.session_id,
            "driver_id": self.driver_id,
            "status": self.status,
            "episodes_completed": self.episodes_completed,
            "change_count": len(self.records),
            "log_path": str(self.log_path) if self.log_path else None,
        }

    def flush_log(self) -> Optional[Path]:
        if self.log_dir is None:
            return None
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.log_dir / f"dil_{self.driver_id or 'anon'}_{self.session_id}.jsonl"
        meta = {
            "session_id": self.session_id,
            "driver_id": self.driver_id,
            "seed": self.seed,
            "episodes": self.episode_cap,
            "scenario": self.scenario.to_dict(),
        }
        with open(self.log_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"meta": meta}) + "\n")
            for record in self.records:
                fh.write(json.dumps(record.to_dict()) + "\n")
            fh.write(json.dumps({"session_end": {
                "status": self.status,
                "episodes_completed": self.episodes_completed,
            }}) + "\n")
        return self.log_path


# -- WebSocket transport --


async def _drain(queue: asyncio.Queue) -> list[dict]:
    items = []
    while True:
        try:
            items.append(queue.get_nowait())
        except asyncio.QueueEmpty:
            return items


async def handle_connection(ws, scenario: ScenarioConfig, log_dir: Optional[Path],
                            tick_hz: float, default_episodes: int) -> None:
    """Session lifecycle for one client connection."""
    from websockets.exceptions import ConnectionClosed

    session = DilSession(scenario, log_dir=log_dir, default_episodes=default_episodes)
    inbox: asyncio.Queue = asyncio.Queue()
    malformed = asyncio.Event()

    async def reader():
        try:
            async for raw in ws:
                try:
                    inbox.put_nowait(json.loads(raw))
                except json.JSONDecodeError:
                    malformed.set()
                    return
        except ConnectionClosed:
            pass

    reader_task = asyncio.create_task(reader())

    async def send(msg: dict) -> None:
        await ws.send(json.dumps(msg) + "\n")

    try:
        start = await inbox.get()
        for msg in session.handle_start(start):
            await send(msg)
        period = 1.0 / tick_hz if tick_hz > 0 else 0.0
        while session.status == "running":
            if period:
                await asyncio.sleep(period)
            if malformed.is_set():
                session.abort()
                await send({"type": "error", "reason": "malformed message"})
                break
            for msg in session.advance(await _drain(inbox)):
                await send(msg)
    except SessionError as exc:
        session.abort()
        try:
            await send({"type": "error", "reason": str(exc)})
        except ConnectionClosed:
            pass
    except ConnectionClosed:
        session.abort()
    finally:
        session.abort()
        reader_task.cancel()
        log.info("session %s ended with status %s (%d records)",
                 session.session_id, session.status, len(session.records))


async def start_server(port: int, scenario: ScenarioConfig, log_dir: Optional[Path],
                       tick_hz: float = 10.0, default_episodes: int = 50):
    """Start the WebSocket server; returns the serving context manager."""
    from websockets.asyncio.server import serve as ws_serve

    async def handler(ws):
        await handle_connection(ws, scenario, log_dir, tick_hz, default_episodes)

    return await ws_serve(handler, "localhost", port)


def serve(port: int, scenario: ScenarioConfig, log_dir: Optional[Path],
          tick_hz: float = 10.0, default_episodes: int = 50) -> None:
    """Blocking entry point used by the CLI."""

    async def run():
        server = await start_server(port, scenario, log_dir, tick_hz, default_episodes)
        async with server:
            await asyncio.Future()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
