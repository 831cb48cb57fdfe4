/**
 * Frame-sequence playback: clips are directories of PNG frames plus a
 * meta.json index ({count, fps, width, height}), drawn onto a canvas.
 * SyncedPair starts two players on the same animation tick so side-by-side
 * comparisons stay aligned.
 */

export interface Playable {
  load(): Promise<void>;
  /** Start playback at the shared reference timestamp (ms). */
  startAt(originMs: number): void;
  readonly durationMs: number;
  readonly completedOnce: boolean;
  onComplete?: () => void;
}

interface ClipMeta {
  count: number;
  fps: number;
  width: number;
  height: number;
}

/** Resolve a media URL: tasks reference the clip's meta.json. */
export function frameUrl(metaUrl: string, index: number): string {
  const base = metaUrl.replace(/meta\.json$/, "");
  return `${base}frame_${String(index).padStart(4, "0")}.png`;
}

export class CanvasFramePlayer implements Playable {
  private meta: ClipMeta | null = null;
  private frames: HTMLImageElement[] = [];
  private raf = 0;
  private _completedOnce = false;
  onComplete?: () => void;

  constructor(
    private canvas: HTMLCanvasElement,
    private metaUrl: string,
  ) {}

  get completedOnce(): boolean {
    return this._completedOnce;
  }

  get durationMs(): number {
    return this.meta ? (this.meta.count / this.meta.fps) * 1000 : 0;
  }

  async load(): Promise<void> {
    const resp = await fetch(this.metaUrl);
    if (!resp.ok) {
      throw new Error(`cannot load ${this.metaUrl}: HTTP ${resp.status}`);
    }
    this.meta = (await resp.json()) as ClipMeta;
    this.canvas.width = this.meta.width;
    this.canvas.height = this.meta.height;
    this.frames = await Promise.all(
      Array.from({ length: this.meta.count }, (_, i) => loadImage(frameUrl(this.metaUrl, i))),
    );
    this.draw(0);
  }

  startAt(originMs: number): void {
    if (!this.meta) {
      throw new Error("player not loaded");
    }
    cancelAnimationFrame(this.raf);
    const tick = () => {
      const elapsed = performance.now() - originMs;
      const frame = Math.floor((elapsed / 1000) * this.meta!.fps);
      if (frame >= this.meta!.count) {
        this.draw(this.meta!.count - 1);
        this._completedOnce = true;
        this.onComplete?.();
        return;
      }
      this.draw(Math.max(frame, 0));
      this.raf = requestAnimationFrame(tick);
    };
    this.raf = requestAnimationFrame(tick);
  }

  private draw(index: number): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx && this.frames[index]) {
      ctx.drawImage(this.frames[index], 0, 0);
    }
  }
}

/** Two players that load together and start on the same origin timestamp. */
export class SyncedPair {
  constructor(
    private left: Playable,
    private right: Playable,
    private now: () => number = () => performance.now(),
  ) {}

  async load(): Promise<void> {
    await Promise.all([this.left.load(), this.right.load()]);
  }

  /** Start both from one reference instant (well under 100 ms of skew). */
  play(): void {
    const origin = this.now();
    this.left.startAt(origin);
    this.right.startAt(origin);
  }

  get bothCompletedOnce(): boolean {
    return this.left.completedOnce && this.right.completedOnce;
  }

  /** Resolves once both streams have finished at least once. */
  whenBothComplete(): Promise<void> {
    return new Promise((resolve) => {
      const check = () => {
        if (this.bothCompletedOnce) {
          resolve();
        }
      };
      this.left.onComplete = check;
      this.right.onComplete = check;
      check();
    });
  }
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`cannot load frame ${url}`));
    img.src = url;
  });
}
