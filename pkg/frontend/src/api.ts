/**
 * Client for the study service HTTP API.
 *
 * Submissions are queued and retried on network failure so a judgment is
 * never lost; the server deduplicates identical resubmissions.
 */

export interface ComparisonTask {
  task_id: string;
  kind: "comparison";
  left: string;
  right: string;
  index: number;
  total: number;
  with_audio: boolean;
}

export interface PhraseTask {
  task_id: string;
  kind: "phrase";
  video: string;
  options: string[];
  index: number;
  total: number;
  with_audio: boolean;
}

export type Task = ComparisonTask | PhraseTask;

export interface StudyDone {
  done: true;
  total: number;
}

export interface JudgmentPayload {
  study_id: string;
  session: string;
  task_id: string;
  response: string;
  playback_complete: boolean;
}

export interface PairResults {
  pair_metrics: Record<string, number>;
  pair_counts: Record<string, number>;
  num_sessions: number;
  phrase_accuracy?: number;
  phrase_count?: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class StudyApi {
  private queue: JudgmentPayload[] = [];

  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  get pendingCount(): number {
    return this.queue.length;
  }

  async nextTask(studyId: string, session: string): Promise<Task | StudyDone> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/studies/${studyId}/sessions/${encodeURIComponent(session)}/next`,
    );
    if (!resp.ok) {
      throw new ApiError(resp.status, await describe(resp));
    }
    return (await resp.json()) as Task | StudyDone;
  }

  async results(studyId: string): Promise<PairResults> {
    const resp = await this.fetchImpl(`${this.baseUrl}/studies/${studyId}/results`);
    if (!resp.ok) {
      throw new ApiError(resp.status, await describe(resp));
    }
    return (await resp.json()) as PairResults;
  }

  /**
   * Submit one judgment. Network failures queue the payload for
   * retryPending(); HTTP errors (bad request, conflict) are surfaced.
   * Returns true when the judgment reached the server.
   */
  async submitJudgment(payload: JudgmentPayload): Promise<boolean> {
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/judgments`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      });
      if (!resp.ok) {
        throw new ApiError(resp.status, await describe(resp));
      }
      return true;
    } catch (err) {
      if (err instanceof ApiError) {
        throw err;
      }
      // network-level failure: keep the judgment for a later retry
      if (!this.queue.some((q) => sameJudgment(q, payload))) {
        this.queue.push(payload);
      }
      return false;
    }
  }

  /** Flush queued judgments in order; stops at the first network failure. */
  async retryPending(): Promise<number> {
    let delivered = 0;
    while (this.queue.length > 0) {
      const payload = this.queue[0];
      this.queue.shift();
      const ok = await this.submitJudgment(payload);
      if (!ok) {
        break;
      }
      delivered += 1;
    }
    return delivered;
  }
}

function sameJudgment(a: JudgmentPayload, b: JudgmentPayload): boolean {
  return (
    a.study_id === b.study_id &&
    a.session === b.session &&
    a.task_id === b.task_id &&
    a.response === b.response
  );
}

async function describe(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: string };
    return body.detail ?? `HTTP ${resp.status}`;
  } catch {
    return `HTTP ${resp.status}`;
  }
}
