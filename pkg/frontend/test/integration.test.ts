/**
 * Round trip against a live study service: fixture media rendered by the
 * CLI, study config posted over HTTP, tasks fetched, playback simulated,
 * judgments submitted, results checked. Requires the Python package
 * (`pip install -e .`) on PATH as `python3`.
 */

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync, mkdirSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { StudyApi, Task } from "../src/api.js";
import { SessionFlow } from "../src/state.js";

const PORT = 8700 + Math.floor(Math.random() * 900);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let studyId = "";

function runCli(args: string[], cwd: string): void {
  const res = spawnSync("python3", ["-m", "mvlip.cli", ...args], {
    cwd,
    encoding: "utf-8",
  });
  if (res.status !== 0) {
    throw new Error(`mvlip ${args[0]} failed:\n${res.stdout}\n${res.stderr}`);
  }
}

/** Hand-written attention traces over the generated clips (T = 6, one view). */
function writeTraces(dir: string, clipIds: string[]): void {
  mkdirSync(dir, { recursive: true });
  for (const clipId of clipIds) {
    const temporal = [
      [[0.5, 0.3, 0.1, 0.1, 0.0, 0.0]],
      [[0.0, 0.1, 0.2, 0.3, 0.3, 0.1]],
    ];
    const trace = {
      clip_id: clipId,
      view_order: [0],
      temporal,
      view: [[1.0], [1.0]],
    };
    writeFileSync(join(dir, `${clipId}.json`), JSON.stringify(trace));
  }
}

async function waitForServer(url: string, tries = 50): Promise<void> {
  for (let i = 0; i < tries; i += 1) {
    try {
      const resp = await fetch(url);
      if (resp.status < 500) {
        return;
      }
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`server at ${url} did not come up`);
}

beforeAll(async () => {
  const root = mkdtempSync(join(tmpdir(), "rater-ui-"));
  runCli(
    ["gen-data", "--out", join(root, "data"), "--num-clips", "3", "--views", "0",
     "--t-min", "6", "--t-max", "6", "--frame-size", "16", "--seed", "3"],
    root,
  );
  const manifest = readFileSync(join(root, "data", "manifest.jsonl"), "utf-8");
  const clipIds = manifest.trim().split("\n").map(
    (line) => (JSON.parse(line) as { clip_id: string }).clip_id,
  );
  writeTraces(join(root, "traces"), clipIds);
  runCli(
    ["compress", "--traces", join(root, "traces"),
     "--manifest", join(root, "data", "manifest.jsonl"),
     "--out", join(root, "comp"), "--view", "0"],
    root,
  );

  server = spawn("python3", [
    "-m", "mvlip.cli", "study-serve",
    "--study-config", join(root, "comp", "study.json"),
    "--media-root", join(root, "comp", "media"),
    "--journal", join(root, "journal.jsonl"),
    "--port", String(PORT),
  ]);
  await waitForServer(`${BASE}/docs`);

  const config = JSON.parse(readFileSync(join(root, "comp", "study.json"), "utf-8"));
  const resp = await fetch(`${BASE}/studies`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(config),
  });
  expect(resp.ok).toBe(true);
  studyId = ((await resp.json()) as { study_id: string }).study_id;
}, 120_000);

afterAll(() => {
  server?.kill();
});

describe("live round trip", () => {
  it("serves playable fixture media", async () => {
    const api = new StudyApi(BASE);
    const task = (await api.nextTask(studyId, "probe")) as Task;
    const mediaUrl = task.kind === "comparison" ? task.left : task.video;
    const meta = await fetch(`${BASE}${mediaUrl}`);
    expect(meta.ok).toBe(true);
    const parsed = (await meta.json()) as { count: number; fps: number };
    expect(parsed.count).toBe(6);
    const frame = await fetch(`${BASE}${mediaUrl.replace("meta.json", "frame_0000.png")}`);
    expect(frame.ok).toBe(true);
  }, 30_000);

  it("completes a full rater session and reports results", async () => {
    const api = new StudyApi(BASE);
    const flow = new SessionFlow(api, studyId, "rater-e2e");
    await flow.advance();

    let guard = 0;
    while (flow.phase !== "done" && guard < 40) {
      guard += 1;
      expect(flow.phase).toBe("playing");
      flow.markPlaybackComplete(); // simulated playback completion
      const task = flow.task!;
      const response = task.kind === "comparison" ? "same" : "0";
      const ok = await flow.submit(response);
      expect(ok).toBe(true);
    }
    expect(flow.phase).toBe("done");

    const results = await api.results(studyId);
    // 3 phrases x 4 pair types answered "same": every pair metric is 1.0
    for (const pt of ["M-O", "V-O", "M-V", "O-O"]) {
      expect(results.pair_metrics[pt]).toBe(1.0);
      expect(results.pair_counts[pt]).toBeGreaterThanOrEqual(3);
    }
    expect(results.phrase_accuracy).toBe(1.0);
    expect(results.num_sessions).toBeGreaterThanOrEqual(1);
  }, 60_000);

  it("rejects a judgment without completed playback (server-side gate)", async () => {
    const api = new StudyApi(BASE);
    const task = (await api.nextTask(studyId, "gatecheck")) as Task;
    await expect(
      api.submitJudgment({
        study_id: studyId,
        session: "gatecheck",
        task_id: task.task_id,
        response: task.kind === "comparison" ? "same" : "0",
        playback_complete: false,
      }),
    ).rejects.toThrowError(/playback/);
  }, 30_000);
});
