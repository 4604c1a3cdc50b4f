// Scene model derived purely from the latest tick: the client never
// simulates physics, so reconnecting mid-session resynchronizes from the
// next tick alone.

import { TickMessage } from "./protocol.js";

export interface SceneModel {
  t: number;
  episode: number;
  egoSpeed: number;
  // Ego-relative longitudinal positions (m); null when the car is absent.
  front: { x: number; v: number } | null;
  targetFront: { x: number; v: number } | null;
  targetBehind: { x: number; v: number } | null;
  indicators: { tf: number; tnf: number; dvnb: number };
}

export function sceneFromTick(tick: TickMessage): SceneModel {
  return {
    t: tick.t,
    episode: tick.episode,
    egoSpeed: tick.ego.v,
    front: tick.f ? { x: tick.f.x, v: tick.f.v } : null,
    targetFront: tick.nf ? { x: tick.nf.x, v: tick.nf.v } : null,
    targetBehind: tick.nb ? { x: tick.nb.x, v: tick.nb.v } : null,
    indicators: tick.indicators,
  };
}

export interface Viewport {
  widthPx: number;
  // Metres of road shown ahead of and behind the ego car.
  aheadM: number;
  behindM: number;
}

// Ego sits at a fixed pixel; other cars are placed by their relative x.
export function xToPx(relX: number, view: Viewport): number {
  const span = view.aheadM + view.behindM;
  return ((relX + view.behindM) / span) * view.widthPx;
}

export function visible(relX: number, view: Viewport): boolean {
  return relX >= -view.behindM && relX <= view.aheadM;
}
