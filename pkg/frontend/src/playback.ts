/**
 * Frame clock driven by the sequence's fps from the .sprk header:
 * a T-frame sequence at fps frames/second plays in T/fps seconds.
 */

export class PlaybackClock {
  playing = false;
  private startedAt = 0;
  private startFrame = 0;

  constructor(public T: number, public fps: number) {}

  get durationSeconds(): number {
    return this.T / this.fps;
  }

  frameAt(elapsedSeconds: number): number {
    const raw = this.startFrame + elapsedSeconds * this.fps;
    return Math.floor(raw) % this.T;
  }

  start(nowSeconds: number, fromFrame = 0): void {
    this.playing = true;
    this.startedAt = nowSeconds;
    this.startFrame = fromFrame;
  }

  stop(): void {
    this.playing = false;
  }

  currentFrame(nowSeconds: number): number {
    if (!this.playing) return this.startFrame % this.T;
    return this.frameAt(nowSeconds - this.startedAt);
  }
}
