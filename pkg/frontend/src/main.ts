/**
 * Page wiring for the capture client: one start button, a status line, and
 * export/upload actions once the timed walk is done.
 */

import { Placement, validateRawCapture } from "./schema.js";
import {
  CaptureSession,
  CueKind,
  PLACING_MS,
  SessionState,
  WALKING_MS,
} from "./session.js";

type MaybePermissionAPI = {
  requestPermission?: () => Promise<"granted" | "denied">;
};

let session: CaptureSession | null = null;
let orientationListener: ((ev: DeviceOrientationEvent) => void) | null = null;
let sawSensorEvent = false;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string): void {
  el<HTMLParagraphElement>("status").textContent = text;
}

function setMessage(text: string): void {
  el<HTMLParagraphElement>("message").textContent = text;
}

function beep(kind: CueKind): void {
  const Ctx = window.AudioContext ??
    (window as unknown as { webkitAudioContext?: typeof AudioContext })
      .webkitAudioContext;
  if (!Ctx) return;
  const ctx = new Ctx();
  const times = kind === "walk-start" ? [0] : [0, 0.35];
  for (const offset of times) {
    const osc = ctx.createOscillator();
    const gain = ctx.createGain();
    osc.frequency.value = kind === "walk-start" ? 880 : 660;
    gain.gain.value = 0.2;
    osc.connect(gain).connect(ctx.destination);
    osc.start(ctx.currentTime + offset);
    osc.stop(ctx.currentTime + offset + 0.25);
  }
}

async function ensureSensorPermission(): Promise<boolean> {
  if (!("DeviceOrientationEvent" in window)) {
    setMessage(
      "This device has no orientation sensor. Open the page on a phone " +
      "to record a walk.");
    return false;
  }
  const api = DeviceOrientationEvent as unknown as MaybePermissionAPI;
  if (typeof api.requestPermission === "function") {
    try {
      const answer = await api.requestPermission();
      if (answer !== "granted") {
        setMessage("Sensor permission was denied; recording is unavailable.");
        return false;
      }
    } catch {
      setMessage("Sensor permission request failed; try again.");
      return false;
    }
  }
  return true;
}

function attachSensor(target: CaptureSession): void {
  sawSensorEvent = false;
  orientationListener = (ev: DeviceOrientationEvent) => {
    sawSensorEvent = true;
    target.recordSample(ev.alpha ?? 0, ev.beta ?? 0, ev.gamma ?? 0);
  };
  window.addEventListener("deviceorientation", orientationListener);
}

function detachSensor(): void {
  if (orientationListener) {
    window.removeEventListener("deviceorientation", orientationListener);
    orientationListener = null;
  }
}

function countdown(state: SessionState): void {
  const total = state === "placing" ? PLACING_MS : WALKING_MS;
  const startedAt = performance.now();
  const tick = () => {
    if (!session || session.state !== state) return;
    const left = Math.max(0, total - (performance.now() - startedAt));
    const label = state === "placing"
      ? `Strap the phone to your ${session.placement}`
      : "Walk!";
    setStatus(`${label} - ${(left / 1000).toFixed(1)} s`);
    if (left > 0) requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);
}

function onStateChange(state: SessionState): void {
  const start = el<HTMLButtonElement>("start");
  const download = el<HTMLButtonElement>("download");
  const upload = el<HTMLButtonElement>("upload");
  switch (state) {
    case "placing":
    case "walking":
      start.disabled = true;
      download.disabled = true;
      upload.disabled = true;
      countdown(state);
      break;
    case "done": {
      detachSensor();
      start.disabled = false;
      const n = session?.sampleCount ?? 0;
      if (n < 2) {
        setStatus("Done, but no sensor data was recorded.");
        setMessage(sawSensorEvent
          ? "Too few samples arrived; try again."
          : "No orientation events arrived. Desktop browsers usually " +
            "lack this sensor; use a phone.");
      } else {
        setStatus(`Done: ${n} samples recorded.`);
        setMessage("");
        download.disabled = false;
        upload.disabled = false;
      }
      break;
    }
    case "idle":
      start.disabled = false;
      setStatus("Ready.");
      break;
  }
}

function exportDoc() {
  if (!session) throw new Error("no session");
  const doc = session.exportCapture();
  const problem = validateRawCapture(doc);
  if (problem) {
    throw new Error(`export failed validation at ${problem.path}: ` +
                    problem.message);
  }
  return doc;
}

async function handleStart(): Promise<void> {
  if (!(await ensureSensorPermission())) return;
  const placement = el<HTMLSelectElement>("placement").value as Placement;
  session = new CaptureSession(placement, {
    onStateChange,
    playCue: beep,
  });
  attachSensor(session);
  setMessage("");
  session.start();
}

function handleDownload(): void {
  try {
    const doc = exportDoc();
    const blob = new Blob([JSON.stringify(doc, null, 2)],
                          { type: "application/json" });
    const url = URL.createObjectURL(blob);
    const a = document.createElement("a");
    a.href = url;
    a.download = `capture_${doc.placement_joint}.json`;
    a.click();
    URL.revokeObjectURL(url);
  } catch (err) {
    setMessage(String(err instanceof Error ? err.message : err));
  }
}

async function handleUpload(): Promise<void> {
  try {
    const doc = exportDoc();
    const resp = await fetch("/capture", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(doc),
    });
    if (!resp.ok) {
      const body = await resp.json().catch(() => ({}));
      throw new Error(`upload rejected (${resp.status}): ` +
                      `${body.error ?? "unknown"} at ${body.path ?? "?"}`);
    }
    const { id } = await resp.json();
    setMessage(`Uploaded as ${id}.`);
  } catch (err) {
    setMessage(String(err instanceof Error ? err.message : err));
  }
}

export function init(): void {
  el<HTMLButtonElement>("start").addEventListener("click", () => {
    void handleStart();
  });
  el<HTMLButtonElement>("download").addEventListener("click", handleDownload);
  el<HTMLButtonElement>("upload").addEventListener("click", () => {
    void handleUpload();
  });
  setStatus("Ready.");
}

if (typeof document !== "undefined" && document.getElementById("start")) {
  init();
}
