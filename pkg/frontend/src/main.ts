// Page wiring: connect form, render loop, keyboard capture, summary view.

import { connect, DilClient } from "./client.js";
import { DecisionInput } from "./input.js";
import { drawScene } from "./render.js";
import { downloadPayload, episodeTableRows, summaryText } from "./summary.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function run(): void {
  const canvas = el<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("canvas 2d context unavailable");
  }
  const statusLine = el<HTMLElement>("status");
  const episodeTable = el<HTMLTableSectionElement>("episodes");
  const summaryLine = el<HTMLElement>("summary");
  const indicatorToggle = el<HTMLInputElement>("show-indicators");

  let client: DilClient | null = null;
  let flashUntilMs = 0;

  const renderLoop = () => {
    drawScene(ctx, client?.scene ?? null, {
      showIndicators: indicatorToggle.checked,
      flashUntilMs,
    }, performance.now());
    requestAnimationFrame(renderLoop);
  };
  requestAnimationFrame(renderLoop);

  const input = new DecisionInput(() => {
    if (client?.requestLaneChange()) {
      flashUntilMs = performance.now() + 250;
    }
  });
  input.bind(window);

  const refreshEpisodes = () => {
    episodeTable.innerHTML = "";
    for (const cells of episodeTableRows(client?.episodes ?? [])) {
      const tr = document.createElement("tr");
      for (const cell of cells) {
        const td = document.createElement("td");
        td.textContent = cell;
        tr.appendChild(td);
      }
      episodeTable.appendChild(tr);
    }
  };

  el<HTMLButtonElement>("connect").addEventListener("click", () => {
    const host = el<HTMLInputElement>("host").value || "localhost";
    const port = Number(el<HTMLInputElement>("port").value || "8710");
    const driverId = el<HTMLInputElement>("driver").value || "anonymous";
    const seed = Number(el<HTMLInputElement>("seed").value || "0");
    const episodes = Number(el<HTMLInputElement>("episodes").value || "50");

    client = connect(host, port, { driverId, seed, episodes }, {
      onStatus: (status, detail) => {
        statusLine.textContent = detail ? `${status}: ${detail}` : status;
        statusLine.dataset.state = status;
      },
      onEpisode: refreshEpisodes,
      onSummary: (summary) => {
        summaryLine.textContent = summaryText(summary);
      },
    });
    summaryLine.textContent = "";
    refreshEpisodes();
  });

  el<HTMLButtonElement>("stop").addEventListener("click", () => client?.stop());

  el<HTMLButtonElement>("download").addEventListener("click", () => {
    const blob = new Blob(
      [downloadPayload(client?.summary ?? null, client?.episodes ?? [])],
      { type: "application/json" },
    );
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "dil-session.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });
}

window.addEventListener("DOMContentLoaded", run);
