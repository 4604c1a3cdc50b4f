// Session summary: per-episode decision table plus a downloadable log of
// what this client observed.

import { SessionSummaryMessage } from "./protocol.js";
import { EpisodeRow } from "./client.js";

export function episodeTableRows(episodes: EpisodeRow[]): string[][] {
  return episodes.map((row) => [
    String(row.episode),
    row.termination,
    String(row.steps),
    row.decisionT === null ? "-" : `${row.decisionT.toFixed(1)} s`,
  ]);
}

export function summaryText(summary: SessionSummaryMessage): string {
  return `session ${summary.session_id} (${summary.driver_id}): ` +
    `${summary.change_count} lane changes in ${summary.episodes_completed} episodes ` +
    `[${summary.status}]`;
}

export function downloadPayload(
  summary: SessionSummaryMessage | null,
  episodes: EpisodeRow[],
): string {
  return JSON.stringify({ summary, episodes }, null, 2) + "\n";
}
