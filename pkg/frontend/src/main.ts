/**
 * Editor wiring: load a .sprk (+ optional label sidecar), inspect the
 * stick-figure playback, drag anchors along the timeline to retime
 * signing, regenerate in-betweens, and A/B compare generations.
 */

import { ApiClient, GenerateResult, ServiceError, SessionInfo, SkeletonDoc } from "./api.js";
import { PlaybackClock } from "./playback.js";
import { boneEdges, projectFrame, ViewKind } from "./projection.js";
import { TimelineModel } from "./timeline.js";

const MARKER_RADIUS = 7;

interface GenerationEntry {
  label: string;
  joints: number[][][];
}

class EditorApp {
  private api = new ApiClient();
  private session: SessionInfo | null = null;
  private timeline: TimelineModel | null = null;
  private clock: PlaybackClock | null = null;
  private skeletonDoc: SkeletonDoc | null = null;
  private edges: Array<[number, number]> = [];
  private generations: GenerationEntry[] = [];
  private activeGen = 0; // index into generations; 0 = loaded ground truth
  private view: ViewKind = "front";
  private inFlight = false;

  private timelineCanvas = document.getElementById("timeline") as HTMLCanvasElement;
  private figureCanvas = document.getElementById("figure") as HTMLCanvasElement;
  private banner = document.getElementById("banner") as HTMLDivElement;
  private playButton = document.getElementById("play") as HTMLButtonElement;
  private regenButton = document.getElementById("regenerate") as HTMLButtonElement;
  private exportLink = document.getElementById("export") as HTMLAnchorElement;
  private historySelect = document.getElementById("history") as HTMLSelectElement;
  private viewSelect = document.getElementById("view") as HTMLSelectElement;
  private stepsInput = document.getElementById("steps") as HTMLInputElement;
  private gammaInput = document.getElementById("gamma") as HTMLInputElement;
  private useTextInput = document.getElementById("use-text") as HTMLInputElement;
  private sprkInput = document.getElementById("sprk-file") as HTMLInputElement;
  private sidecarInput = document.getElementById("sidecar-file") as HTMLInputElement;

  async start(): Promise<void> {
    try {
      await this.api.health();
      this.skeletonDoc = await this.api.skeleton();
      this.edges = boneEdges(this.skeletonDoc);
      this.clearBanner();
    } catch (err) {
      this.showBanner(`service unreachable: ${String(err)} (retry by reloading)`);
    }
    this.bindEvents();
    requestAnimationFrame(() => this.tick());
  }

  private bindEvents(): void {
    this.sprkInput.addEventListener("change", () => void this.loadSession());
    this.playButton.addEventListener("click", () => this.togglePlay());
    this.regenButton.addEventListener("click", () => void this.regenerate());
    this.historySelect.addEventListener("change", () => {
      this.activeGen = Number(this.historySelect.value);
    });
    this.viewSelect.addEventListener("change", () => {
      this.view = this.viewSelect.value as ViewKind;
    });
    this.timelineCanvas.addEventListener("pointerdown", (ev) => this.onPointerDown(ev));
    this.timelineCanvas.addEventListener("pointermove", (ev) => this.onPointerMove(ev));
    this.timelineCanvas.addEventListener("pointerup", (ev) => void this.onPointerUp(ev));
  }

  private showBanner(message: string): void {
    this.banner.textContent = message;
    this.banner.style.display = "block";
  }

  private clearBanner(): void {
    this.banner.style.display = "none";
  }

  private async readFileBase64(file: File): Promise<string> {
    const buf = new Uint8Array(await file.arrayBuffer());
    let binary = "";
    buf.forEach((b) => (binary += String.fromCharCode(b)));
    return btoa(binary);
  }

  private async loadSession(): Promise<void> {
    const file = this.sprkInput.files?.[0];
    if (!file) return;
    try {
      const sprkB64 = await this.readFileBase64(file);
      let sidecar: unknown;
      const sideFile = this.sidecarInput.files?.[0];
      if (sideFile) sidecar = JSON.parse(await sideFile.text());
      const info = await this.api.openSession(sprkB64, sidecar);
      this.session = info;
      this.timeline = new TimelineModel(info.T, info.anchor_frames);
      this.clock = new PlaybackClock(info.T, info.fps);
      const loaded = await this.api.loadedJoints(info.session_id);
      this.generations = [{ label: "loaded", joints: loaded.joints }];
      this.activeGen = 0;
      this.refreshHistory();
      this.clearBanner();
    } catch (err) {
      this.showBanner(`failed to load session: ${String(err)}`);
    }
  }

  private togglePlay(): void {
    if (!this.clock) return;
    if (this.clock.playing) {
      this.clock.stop();
      this.playButton.textContent = "play";
    } else {
      this.clock.start(performance.now() / 1000, this.timeline?.playhead ?? 0);
      this.playButton.textContent = "pause";
    }
  }

  private refreshHistory(): void {
    this.historySelect.innerHTML = "";
    this.generations.forEach((gen, index) => {
      const option = document.createElement("option");
      option.value = String(index);
      option.textContent = gen.label;
      this.historySelect.appendChild(option);
    });
    this.historySelect.value = String(this.activeGen);
  }

  private async regenerate(): Promise<void> {
    if (!this.session || this.inFlight) return;
    this.inFlight = true;
    this.regenButton.disabled = true; // one generation in flight per session
    try {
      const result: GenerateResult = await this.api.generate(this.session.session_id, {
        steps: Number(this.stepsInput.value) || 10,
        gamma: Number(this.gammaInput.value) || 2.0,
        use_text: this.useTextInput.checked,
        seed: 0,
      });
      this.generations.push({ label: result.gen_id, joints: result.joints });
      this.activeGen = this.generations.length - 1;
      this.refreshHistory();
      this.exportLink.href = this.api.exportUrl(this.session.session_id, result.gen_id);
      this.exportLink.style.display = "inline";
      this.clearBanner();
    } catch (err) {
      const detail = err instanceof ServiceError ? err.detail : String(err);
      this.showBanner(`generation failed: ${detail}`);
    } finally {
      this.inFlight = false;
      this.regenButton.disabled = false;
    }
  }

  private frameAtX(x: number): number {
    if (!this.timeline) return 0;
    const { width } = this.timelineCanvas;
    return this.timeline.clampFrame((x / width) * (this.timeline.T - 1));
  }

  private onPointerDown(ev: PointerEvent): void {
    if (!this.timeline) return;
    const frame = this.frameAtX(ev.offsetX);
    // pick the nearest marker within one marker radius worth of frames
    const perFrame = this.timelineCanvas.width / Math.max(this.timeline.T - 1, 1);
    const tolerance = Math.max(1, Math.round(MARKER_RADIUS / perFrame));
    let best: number | null = null;
    for (const marker of this.timeline.markers) {
      if (Math.abs(marker - frame) <= tolerance) {
        if (best === null || Math.abs(marker - frame) < Math.abs(best - frame)) best = marker;
      }
    }
    if (best !== null) {
      this.timeline.beginDrag(best);
    } else {
      this.timeline.setPlayhead(frame);
    }
  }

  private onPointerMove(ev: PointerEvent): void {
    this.timeline?.dragTo(this.frameAtX(ev.offsetX));
  }

  private async onPointerUp(ev: PointerEvent): Promise<void> {
    if (!this.timeline || !this.session) return;
    this.timeline.dragTo(this.frameAtX(ev.offsetX));
    const result = this.timeline.endDrag();
    if (result.kind === "snapback") {
      this.showBanner(`anchor kept at frame ${result.from}: ${result.reason}`);
      return;
    }
    if (result.kind !== "moved") return;
    try {
      const info = await this.api.moveAnchor(this.session.session_id, {
        from_frame: result.from!,
        to_frame: result.to!,
      });
      this.session = info;
      this.timeline.setMarkers(info.anchor_frames);
      this.clearBanner();
    } catch (err) {
      this.timeline.rollback(result.from!, result.to!);
      const detail = err instanceof ServiceError ? err.detail : String(err);
      this.showBanner(`move rejected: ${detail}`);
    }
  }

  private tick(): void {
    this.drawTimeline();
    this.drawFigure();
    requestAnimationFrame(() => this.tick());
  }

  private drawTimeline(): void {
    const ctx = this.timelineCanvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.timelineCanvas;
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = "#20262e";
    ctx.fillRect(0, 0, width, height);
    if (!this.timeline) return;
    const toX = (frame: number) => (frame / Math.max(this.timeline!.T - 1, 1)) * width;

    ctx.strokeStyle = "#3d4754";
    ctx.beginPath();
    ctx.moveTo(0, height / 2);
    ctx.lineTo(width, height / 2);
    ctx.stroke();

    if (this.clock?.playing) {
      this.timeline.setPlayhead(this.clock.currentFrame(performance.now() / 1000));
    }
    ctx.strokeStyle = "#e8e8e8";
    const px = toX(this.timeline.playhead);
    ctx.beginPath();
    ctx.moveTo(px, 0);
    ctx.lineTo(px, height);
    ctx.stroke();

    for (const marker of this.timeline.markers) {
      ctx.fillStyle = "#ffcc33";
      ctx.beginPath();
      ctx.arc(toX(marker), height / 2, MARKER_RADIUS, 0, Math.PI * 2);
      ctx.fill();
    }
    const dragFrame = this.timeline.dragFrame;
    if (dragFrame !== null) {
      ctx.fillStyle = "#66ccff";
      ctx.beginPath();
      ctx.arc(toX(dragFrame), height / 2, MARKER_RADIUS, 0, Math.PI * 2);
      ctx.fill();
    }
  }

  private drawFigure(): void {
    const ctx = this.figureCanvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.figureCanvas;
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = "#11151a";
    ctx.fillRect(0, 0, width, height);
    const gen = this.generations[this.activeGen];
    if (!gen || !this.timeline) return;
    const frame = Math.min(this.timeline.playhead, gen.joints.length - 1);
    const pts = projectFrame(gen.joints[frame], this.view, width, height);
    ctx.strokeStyle = "#7fd4a8";
    ctx.lineWidth = 2;
    for (const [parent, child] of this.edges) {
      ctx.beginPath();
      ctx.moveTo(pts[parent].x, pts[parent].y);
      ctx.lineTo(pts[child].x, pts[child].y);
      ctx.stroke();
    }
    ctx.fillStyle = "#d8e8f8";
    for (const p of pts) {
      ctx.beginPath();
      ctx.arc(p.x, p.y, 2.5, 0, Math.PI * 2);
      ctx.fill();
    }
  }
}

if (typeof document !== "undefined" && document.getElementById("timeline")) {
  void new EditorApp().start();
}
