/**
 * gaitlab/v1 raw-capture wire format.
 *
 * Vendored from the analysis backend; this file is the client's single
 * source of truth for what an upload must look like.  Keep in sync with
 * the server's schema definition.
 */

export const SCHEMA_ID = "gaitlab/v1";

export type Placement = "ankle" | "knee" | "hip";

export interface RawSample {
  t: number;
  alpha: number;
  beta: number;
  gamma: number;
}

export interface RawCaptureDoc {
  schema: typeof SCHEMA_ID;
  placement_joint: Placement;
  sample_rate: number;
  samples: RawSample[];
}

/** JSON Schema mirror of the backend contract, for tooling and docs. */
export const RAW_CAPTURE_SCHEMA = {
  type: "object",
  required: ["schema", "placement_joint", "sample_rate", "samples"],
  additionalProperties: false,
  properties: {
    schema: { const: SCHEMA_ID },
    placement_joint: { enum: ["ankle", "knee", "hip"] },
    sample_rate: { type: "number", exclusiveMinimum: 0 },
    samples: {
      type: "array",
      minItems: 2,
      items: {
        type: "object",
        required: ["t", "alpha", "beta", "gamma"],
        additionalProperties: false,
        properties: {
          t: { type: "number" },
          alpha: { type: "number" },
          beta: { type: "number" },
          gamma: { type: "number" },
        },
      },
    },
  },
} as const;

export interface ValidationError {
  path: string;
  message: string;
}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

/**
 * Structural validation of a capture document against the vendored
 * contract.  Returns null when valid, otherwise the first error with the
 * slash-joined path of the offending field (mirroring the backend's 422
 * responses).
 */
export function validateRawCapture(doc: unknown): ValidationError | null {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    return { path: "", message: "document must be an object" };
  }
  const rec = doc as Record<string, unknown>;
  const allowed = new Set(["schema", "placement_joint", "sample_rate", "samples"]);
  for (const key of Object.keys(rec)) {
    if (!allowed.has(key)) {
      return { path: key, message: `unexpected field '${key}'` };
    }
  }
  if (rec.schema !== SCHEMA_ID) {
    return { path: "schema", message: `schema must be '${SCHEMA_ID}'` };
  }
  if (rec.placement_joint !== "ankle" && rec.placement_joint !== "knee" &&
      rec.placement_joint !== "hip") {
    return { path: "placement_joint", message: "must be ankle, knee or hip" };
  }
  if (!isFiniteNumber(rec.sample_rate) || rec.sample_rate <= 0) {
    return { path: "sample_rate", message: "must be a number > 0" };
  }
  if (!Array.isArray(rec.samples)) {
    return { path: "samples", message: "must be an array" };
  }
  if (rec.samples.length < 2) {
    return { path: "samples", message: "need at least 2 samples" };
  }
  let prevT = -Infinity;
  for (let i = 0; i < rec.samples.length; i++) {
    const s = rec.samples[i];
    if (typeof s !== "object" || s === null || Array.isArray(s)) {
      return { path: `samples/${i}`, message: "sample must be an object" };
    }
    const srec = s as Record<string, unknown>;
    for (const field of ["t", "alpha", "beta", "gamma"]) {
      if (!isFiniteNumber(srec[field])) {
        return {
          path: `samples/${i}/${field}`,
          message: `'${field}' must be a finite number`,
        };
      }
    }
    for (const key of Object.keys(srec)) {
      if (!["t", "alpha", "beta", "gamma"].includes(key)) {
        return { path: `samples/${i}/${key}`, message: "unexpected field" };
      }
    }
    const t = srec.t as number;
    if (t <= prevT) {
      return {
        path: `samples/${i}/t`,
        message: "timestamps must be strictly increasing",
      };
    }
    prevT = t;
  }
  return null;
}
