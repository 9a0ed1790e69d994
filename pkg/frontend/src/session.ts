/**
 * Capture session state machine, free of DOM dependencies.
 *
 * Protocol: after the start tap the user gets a placement window to strap
 * the phone to the joint, then a cue sound marks the start of the timed
 * walk, and a second cue marks its end.  Orientation samples are buffered
 * only during the walk window.
 */

import { Placement, RawCaptureDoc, SCHEMA_ID } from "./schema.js";

export const PLACING_MS = 10_000;
export const WALKING_MS = 12_000;

export type SessionState = "idle" | "placing" | "walking" | "done";

export type CueKind = "walk-start" | "walk-end";

type TimerHandle = unknown;

export interface SessionHooks {
  /** Millisecond clock; injectable for deterministic tests. */
  now?: () => number;
  setTimer?: (cb: () => void, ms: number) => TimerHandle;
  clearTimer?: (handle: TimerHandle) => void;
  onStateChange?: (state: SessionState) => void;
  playCue?: (kind: CueKind) => void;
}

export class SessionError extends Error {}

export class CaptureSession {
  readonly placement: Placement;

  private stateValue: SessionState = "idle";
  private samples: { t: number; alpha: number; beta: number; gamma: number }[] = [];
  private walkStartedAt = 0;
  private dropped = 0;
  private pendingTimer: TimerHandle | null = null;

  private readonly now: () => number;
  private readonly setTimer: (cb: () => void, ms: number) => TimerHandle;
  private readonly clearTimer: (handle: TimerHandle) => void;
  private readonly onStateChange: (state: SessionState) => void;
  private readonly playCue: (kind: CueKind) => void;

  constructor(placement: Placement, hooks: SessionHooks = {}) {
    this.placement = placement;
    this.now = hooks.now ?? (() => performance.now());
    this.setTimer = hooks.setTimer ?? ((cb, ms) => setTimeout(cb, ms));
    this.clearTimer = hooks.clearTimer ?? ((h) => clearTimeout(h as number));
    this.onStateChange = hooks.onStateChange ?? (() => undefined);
    this.playCue = hooks.playCue ?? (() => undefined);
  }

  get state(): SessionState {
    return this.stateValue;
  }

  get sampleCount(): number {
    return this.samples.length;
  }

  /** Samples rejected for running backwards against the clock. */
  get droppedCount(): number {
    return this.dropped;
  }

  private transition(next: SessionState): void {
    this.stateValue = next;
    this.onStateChange(next);
  }

  /** Begin the placement countdown; the walk window follows automatically. */
  start(): void {
    if (this.stateValue !== "idle") {
      throw new SessionError(`cannot start from state '${this.stateValue}'`);
    }
    this.transition("placing");
    this.pendingTimer = this.setTimer(() => this.beginWalk(), PLACING_MS);
  }

  private beginWalk(): void {
    this.walkStartedAt = this.now();
    this.transition("walking");
    this.playCue("walk-start");
    this.pendingTimer = this.setTimer(() => this.finish(), WALKING_MS);
  }

  private finish(): void {
    this.pendingTimer = null;
    this.transition("done");
    this.playCue("walk-end");
  }

  /** Abort a running session; buffered samples are discarded. */
  cancel(): void {
    if (this.pendingTimer !== null) {
      this.clearTimer(this.pendingTimer);
      this.pendingTimer = null;
    }
    this.samples = [];
    this.transition("idle");
  }

  /**
   * Record one orientation reading.  Ignored outside the walk window;
   * non-increasing timestamps are dropped so the export is always strictly
   * monotone.
   */
  recordSample(alpha: number, beta: number, gamma: number): void {
    if (this.stateValue !== "walking") {
      return;
    }
    if (![alpha, beta, gamma].every(Number.isFinite)) {
      this.dropped += 1;
      return;
    }
    const t = this.now() - this.walkStartedAt;
    const last = this.samples[this.samples.length - 1];
    if (last !== undefined && t <= last.t) {
      this.dropped += 1;
      return;
    }
    this.samples.push({ t, alpha, beta, gamma });
  }

  /**
   * Export the finished session as a gaitlab/v1 raw capture.  The sample
   * rate is the measured average over the walk window, since orientation
   * event cadence varies by device.
   */
  exportCapture(): RawCaptureDoc {
    if (this.stateValue !== "done") {
      throw new SessionError("session is not finished");
    }
    if (this.samples.length < 2) {
      throw new SessionError(
        "no recorded samples to export; was the sensor active?");
    }
    const first = this.samples[0]!;
    const last = this.samples[this.samples.length - 1]!;
    const spanS = (last.t - first.t) / 1000;
    const rate = (this.samples.length - 1) / spanS;
    return {
      schema: SCHEMA_ID,
      placement_joint: this.placement,
      sample_rate: rate,
      samples: this.samples.map((s) => ({
        t: s.t,
        alpha: s.alpha,
        beta: s.beta,
        gamma: s.gamma,
      })),
    };
  }
}
