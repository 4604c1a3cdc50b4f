// Top-down two-lane canvas rendering of the latest scene. Fidelity is not
// the point; decision timing is, so the drawing stays minimal and fast.

import { SceneModel, Viewport, visible, xToPx } from "./scene.js";

const LANE_COLORS = { road: "#2b2b33", marking: "#b9b9b9" };
const CAR_LENGTH_M = 4.5;

export interface RenderOptions {
  showIndicators: boolean;
  flashUntilMs: number;
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  scene: SceneModel | null,
  options: RenderOptions,
  nowMs: number,
): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  const view: Viewport = { widthPx: w, aheadM: 160, behindM: 80 };
  const laneH = h / 2;

  ctx.fillStyle = LANE_COLORS.road;
  ctx.fillRect(0, 0, w, h);
  ctx.strokeStyle = LANE_COLORS.marking;
  ctx.setLineDash([18, 14]);
  ctx.beginPath();
  ctx.moveTo(0, laneH);
  ctx.lineTo(w, laneH);
  ctx.stroke();
  ctx.setLineDash([]);

  if (!scene) {
    return;
  }

  // Current lane on the bottom, target lane on top.
  const currentY = laneH * 1.5;
  const targetY = laneH * 0.5;
  const carW = (CAR_LENGTH_M / (view.aheadM + view.behindM)) * w;
  const carH = laneH * 0.42;

  const drawCar = (relX: number, y: number, color: string, label: string) => {
    if (!visible(relX, view)) {
      return;
    }
    const px = xToPx(relX, view);
    ctx.fillStyle = color;
    ctx.fillRect(px - carW / 2, y - carH / 2, carW, carH);
    ctx.fillStyle = "#ffffff";
    ctx.font = "11px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(label, px, y - carH / 2 - 4);
  };

  const flashing = nowMs < options.flashUntilMs;
  drawCar(0, currentY, flashing ? "#ffd43b" : "#4dabf7", "ego");
  if (scene.front) {
    drawCar(scene.front.x, currentY, "#e8590c", `${scene.front.v.toFixed(1)} m/s`);
  }
  if (scene.targetFront) {
    drawCar(scene.targetFront.x, targetY, "#40c057", `${scene.targetFront.v.toFixed(1)} m/s`);
  }
  if (scene.targetBehind) {
    drawCar(scene.targetBehind.x, targetY, "#9775fa", `${scene.targetBehind.v.toFixed(1)} m/s`);
  }

  ctx.fillStyle = "#ffffff";
  ctx.font = "13px sans-serif";
  ctx.textAlign = "left";
  ctx.fillText(`episode ${scene.episode}   t=${scene.t.toFixed(1)} s   ` +
    `ego ${scene.egoSpeed.toFixed(1)} m/s`, 10, 18);

  if (options.showIndicators) {
    const ind = scene.indicators;
    ctx.fillText(
      `tf=${ind.tf.toFixed(2)} s  tnf=${ind.tnf.toFixed(2)} s  dvnb=${ind.dvnb.toFixed(2)} m/s`,
      10, h - 10,
    );
  }
}
