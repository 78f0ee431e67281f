/**
 * Typed client for the keyflow editor service. All editor I/O goes
 * through this module; the fetch implementation is injectable for tests.
 */

export interface SessionInfo {
  session_id: string;
  T: number;
  fps: number;
  mask: boolean[];
  anchor_frames: number[];
}

export interface JointsPayload {
  T: number;
  fps: number;
  joints: number[][][]; // T x 41 x 3
}

export interface GenerateResult extends JointsPayload {
  gen_id: string;
}

export interface SkeletonJoint {
  name: string;
  parent: number;
  offset: [number, number, number];
}

export interface SkeletonDoc {
  v: number;
  joints: SkeletonJoint[];
}

export interface AnchorMove {
  from_frame: number;
  to_frame: number;
}

export interface GenerateOptions {
  steps: number;
  gamma: number;
  use_text: boolean;
  seed: number;
}

export class ServiceError extends Error {
  constructor(public status: number, public detail: string) {
    super(`service error ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "http://127.0.0.1:8789",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ServiceError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<{ ok: boolean }> {
    return this.request("/health");
  }

  skeleton(): Promise<SkeletonDoc> {
    return this.request("/skeleton");
  }

  openSession(sprkB64: string, sidecar?: unknown, mask?: boolean[]): Promise<SessionInfo> {
    return this.post("/session", { sprk_b64: sprkB64, sidecar: sidecar ?? null, mask: mask ?? null });
  }

  loadedJoints(sessionId: string): Promise<JointsPayload> {
    return this.request(`/session/${sessionId}/joints`);
  }

  moveAnchor(sessionId: string, move: AnchorMove): Promise<SessionInfo> {
    return this.post(`/session/${sessionId}/anchors`, { moves: [move], pose_edits: [] });
  }

  editPose(
    sessionId: string,
    frame: number,
    jointIndex: number,
    rot6d: number[],
  ): Promise<SessionInfo> {
    return this.post(`/session/${sessionId}/anchors`, {
      moves: [],
      pose_edits: [{ frame, joint_index: jointIndex, rot6d }],
    });
  }

  generate(sessionId: string, opts: GenerateOptions): Promise<GenerateResult> {
    return this.post(`/session/${sessionId}/generate`, opts);
  }

  exportUrl(sessionId: string, genId: string): string {
    return `${this.baseUrl}/session/${sessionId}/export/${genId}`;
  }
}
