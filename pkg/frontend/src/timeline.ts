/**
 * Timeline state: anchor markers along [0, T), one optional drag in
 * progress, and a playhead. Pure logic, no DOM; the canvas layer feeds
 * pointer positions in and renders from the state.
 *
 * Drag rules: targets are clamped to [0, T); dropping on another marker's
 * frame is rejected and the marker snaps back; a successful drop reports
 * the move so the caller can POST it (optimistic update + rollback on
 * 422).
 */

export interface DragResult {
  kind: "moved" | "snapback" | "noop";
  from?: number;
  to?: number;
  reason?: string;
}

export class TimelineModel {
  markers: number[];
  playhead = 0;
  private drag: { from: number; current: number } | null = null;

  constructor(public T: number, anchorFrames: number[]) {
    this.markers = [...anchorFrames].sort((a, b) => a - b);
  }

  setMarkers(frames: number[]): void {
    this.markers = [...frames].sort((a, b) => a - b);
  }

  hasMarker(frame: number): boolean {
    return this.markers.includes(frame);
  }

  get dragging(): boolean {
    return this.drag !== null;
  }

  get dragFrame(): number | null {
    return this.drag ? this.drag.current : null;
  }

  clampFrame(frame: number): number {
    return Math.min(Math.max(Math.round(frame), 0), this.T - 1);
  }

  beginDrag(frame: number): boolean {
    if (this.drag !== null || !this.hasMarker(frame)) return false;
    this.drag = { from: frame, current: frame };
    return true;
  }

  dragTo(frame: number): void {
    if (!this.drag) return;
    // out-of-range positions are prevented client-side by clamping
    this.drag.current = this.clampFrame(frame);
  }

  endDrag(): DragResult {
    if (!this.drag) return { kind: "noop" };
    const { from, current } = this.drag;
    this.drag = null;
    if (current === from) return { kind: "noop", from, to: from };
    if (this.hasMarker(current)) {
      return { kind: "snapback", from, to: current, reason: "frame already has an anchor" };
    }
    this.markers = this.markers.filter((f) => f !== from).concat(current).sort((a, b) => a - b);
    return { kind: "moved", from, to: current };
  }

  /** Roll an optimistic move back after the service rejected it. */
  rollback(from: number, to: number): void {
    this.markers = this.markers.filter((f) => f !== to).concat(from).sort((a, b) => a - b);
  }

  setPlayhead(frame: number): void {
    this.playhead = this.clampFrame(frame);
  }
}
