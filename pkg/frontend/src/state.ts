/**
 * Session flow: fetch task -> play media -> unlock controls -> submit ->
 * advance. Judgments cannot be sent before playback finished once, double
 * clicks collapse into one submission, and a refresh resumes at the first
 * unanswered task because the server drives task order.
 */

import { JudgmentPayload, StudyApi, StudyDone, Task } from "./api.js";

export type Phase =
  | "loading"
  | "playing"
  | "awaiting-judgment"
  | "submitting"
  | "done"
  | "error";

export interface FlowEvents {
  onTask?: (task: Task) => void;
  onPhase?: (phase: Phase) => void;
  onDone?: (summary: StudyDone) => void;
  onError?: (message: string) => void;
}

export class SessionFlow {
  phase: Phase = "loading";
  task: Task | null = null;
  playbackComplete = false;
  private submitting = false;

  constructor(
    private api: StudyApi,
    private studyId: string,
    private session: string,
    private events: FlowEvents = {},
  ) {}

  private setPhase(phase: Phase): void {
    this.phase = phase;
    this.events.onPhase?.(phase);
  }

  /** Fetch the next unanswered task (also the resume path after refresh). */
  async advance(): Promise<void> {
    this.setPhase("loading");
    this.playbackComplete = false;
    this.task = null;
    try {
      const next = await this.api.nextTask(this.studyId, this.session);
      if ("done" in next && next.done) {
        this.setPhase("done");
        this.events.onDone?.(next);
        return;
      }
      this.task = next as Task;
      this.setPhase("playing");
      this.events.onTask?.(this.task);
    } catch (err) {
      this.setPhase("error");
      this.events.onError?.(String(err));
    }
  }

  /** Called by the player once all streams finished at least one pass. */
  markPlaybackComplete(): void {
    if (this.phase !== "playing") {
      return;
    }
    this.playbackComplete = true;
    this.setPhase("awaiting-judgment");
  }

  get canSubmit(): boolean {
    return this.phase === "awaiting-judgment" && this.playbackComplete && !this.submitting;
  }

  /**
   * Submit a judgment for the current task. Rejected before playback has
   * completed; duplicate clicks while submitting are ignored. On network
   * failure the payload stays queued in the api client and the flow remains
   * on the same task so a retry can drain it.
   */
  async submit(response: string): Promise<boolean> {
    if (!this.canSubmit || this.task === null) {
      return false;
    }
    this.submitting = true;
    this.setPhase("submitting");
    const payload: JudgmentPayload = {
      study_id: this.studyId,
      session: this.session,
      task_id: this.task.task_id,
      response,
      playback_complete: this.playbackComplete,
    };
    try {
      const delivered = await this.api.submitJudgment(payload);
      if (!delivered) {
        // queued for retry; keep showing the task with controls enabled
        this.setPhase("awaiting-judgment");
        return false;
      }
      await this.advance();
      return true;
    } catch (err) {
      this.setPhase("error");
      this.events.onError?.(String(err));
      return false;
    } finally {
      this.submitting = false;
    }
  }

  /** Drain queued offline judgments, then move on if we were stuck. */
  async retryPending(): Promise<void> {
    const delivered = await this.api.retryPending();
    if (delivered > 0 && this.phase !== "done") {
      await this.advance();
    }
  }
}
