/**
 * DOM wiring for the rater interface.
 *
 * URL parameters: ?study=<id>&session=<name>&api=<base-url>
 * Comparison tasks show two synchronized canvases and left/right/same
 * buttons; phrase tasks show one muted canvas and four phrase options.
 */

import { StudyApi, Task } from "./api.js";
import { CanvasFramePlayer, SyncedPair } from "./player.js";
import { SessionFlow } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const apiBase = params.get("api") ?? "";
  const studyId = params.get("study") ?? "";
  const session = params.get("session") ?? `rater-${Math.random().toString(36).slice(2, 8)}`;

  const api = new StudyApi(apiBase);
  const status = el<HTMLDivElement>("status");
  const stage = el<HTMLDivElement>("stage");
  const controls = el<HTMLDivElement>("controls");

  const flow = new SessionFlow(api, studyId, session, {
    onPhase: (phase) => {
      status.textContent =
        phase === "playing" ? "watch both clips to the end"
        : phase === "awaiting-judgment" ? "make your judgment"
        : phase === "submitting" ? "saving..."
        : phase === "loading" ? "loading..."
        : phase === "error" ? "connection trouble - judgments are kept and retried"
        : "";
    },
    onTask: (task) => renderTask(task),
    onDone: (summary) => {
      stage.innerHTML = "";
      controls.innerHTML = "";
      status.textContent = `all ${summary.total} tasks answered - thank you!`;
    },
    onError: (msg) => {
      const banner = el<HTMLDivElement>("banner");
      banner.textContent = `${msg} - retrying...`;
      banner.style.display = "block";
      window.setTimeout(() => {
        banner.style.display = "none";
        void flow.retryPending();
      }, 1500);
    },
  });

  function judgmentButton(label: string, response: string): HTMLButtonElement {
    const btn = document.createElement("button");
    btn.textContent = label;
    btn.disabled = true;
    btn.dataset.response = response;
    btn.onclick = () => void flow.submit(response);
    return btn;
  }

  function renderTask(task: Task): void {
    stage.innerHTML = "";
    controls.innerHTML = "";
    const progress = el<HTMLSpanElement>("progress");
    progress.textContent = `${task.index + 1} / ${task.total}`;

    if (task.kind === "comparison") {
      const leftCanvas = document.createElement("canvas");
      const rightCanvas = document.createElement("canvas");
      stage.append(leftCanvas, rightCanvas);
      const pair = new SyncedPair(
        new CanvasFramePlayer(leftCanvas, task.left),
        new CanvasFramePlayer(rightCanvas, task.right),
      );
      const buttons = [
        judgmentButton("left is better", "left"),
        judgmentButton("same quality", "same"),
        judgmentButton("right is better", "right"),
      ];
      controls.append(...buttons);
      void pair.load().then(() => {
        pair.play();
        void pair.whenBothComplete().then(() => {
          flow.markPlaybackComplete();
          buttons.forEach((b) => (b.disabled = false));
        });
      });
    } else {
      const canvas = document.createElement("canvas");
      stage.append(canvas);
      const player = new CanvasFramePlayer(canvas, task.video);
      const buttons = task.options.map((text, i) =>
        judgmentButton(text, String(i)),
      );
      controls.append(...buttons);
      void player.load().then(() => {
        player.onComplete = () => {
          flow.markPlaybackComplete();
          buttons.forEach((b) => (b.disabled = false));
        };
        player.startAt(performance.now());
      });
    }
  }

  window.addEventListener("online", () => void flow.retryPending());
  void flow.advance();
}

boot();
