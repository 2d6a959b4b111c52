import { spawn } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { WRAPPER_SOURCE } from "./pyshim";

export type ExecStatus = "ok" | "timeout" | "error" | "forbidden";

export interface ExecRequest {
  code: string;
  timeout_ms?: number;
  memory_cap_bytes?: number;
}

export interface ExecResult {
  status: ExecStatus;
  answer: string | null;
  stderr_excerpt: string;
}

// the process exit code mirrors the result status
export const EXIT_CODES: Record<ExecStatus, number> = {
  ok: 0,
  error: 1,
  timeout: 2,
  forbidden: 3,
};

const MAX_CODE_BYTES = 64 * 1024;
const DEFAULT_TIMEOUT_MS = 5000;
const DEFAULT_MEMORY_CAP_BYTES = 256 * 1024 * 1024;
const STDERR_TAIL_BYTES = 8 * 1024;

function failure(excerpt: string): ExecResult {
  return { status: "error", answer: null, stderr_excerpt: excerpt };
}

function tail(text: string): string {
  return text.length > STDERR_TAIL_BYTES ? text.slice(-STDERR_TAIL_BYTES) : text;
}

function positiveOr(fallback: number, value: unknown): number {
  return typeof value === "number" && Number.isFinite(value) && value > 0
    ? Math.floor(value)
    : fallback;
}

/** Run one program in a fresh python process inside a throwaway scratch
 * directory. Never rejects; every failure mode maps onto a result status. */
export function executeRequest(request: ExecRequest): Promise<ExecResult> {
  const code = request.code;
  if (typeof code !== "string") {
    return Promise.resolve(failure("request carries no code text"));
  }
  if (Buffer.byteLength(code, "utf8") > MAX_CODE_BYTES) {
    return Promise.resolve(failure("program exceeds the 64 KiB limit"));
  }
  const timeoutMs = positiveOr(DEFAULT_TIMEOUT_MS, request.timeout_ms);
  const memoryCap = positiveOr(DEFAULT_MEMORY_CAP_BYTES, request.memory_cap_bytes);

  let scratch: string;
  try {
    scratch = mkdtempSync(join(tmpdir(), "exec-"));
    writeFileSync(join(scratch, "prog.py"), code, "utf8");
  } catch (err) {
    return Promise.resolve(failure(`cannot stage the program: ${String(err)}`));
  }

  return new Promise((resolve) => {
    const child = spawn(
      "python3",
      ["-I", "-c", WRAPPER_SOURCE, join(scratch, "prog.py"),
       String(timeoutMs), String(memoryCap)],
      {
        cwd: scratch,
        shell: false,
        stdio: ["ignore", "pipe", "pipe"],
        // scratch doubles as tmp and home so stdlib helpers stay confined
        env: { ...process.env, TMPDIR: scratch, HOME: scratch },
      },
    );

    let resultLine = "";
    let stderrBuf = "";
    let timedOut = false;
    let settled = false;

    const finish = (result: ExecResult) => {
      if (settled) return;
      settled = true;
      clearTimeout(timer);
      rmSync(scratch, { recursive: true, force: true });
      resolve(result);
    };

    const timer = setTimeout(() => {
      timedOut = true;
      child.kill("SIGKILL");
    }, timeoutMs);

    // stdout carries exactly one JSON line from the shim; user prints are
    // rerouted to stderr inside the job process
    child.stdout.on("data", (chunk: Buffer) => {
      if (resultLine.length < 4 * MAX_CODE_BYTES) resultLine += chunk.toString("utf8");
    });
    child.stderr.on("data", (chunk: Buffer) => {
      stderrBuf = tail(stderrBuf + chunk.toString("utf8"));
    });

    child.on("error", (err) => {
      finish(failure(`python3 did not start: ${err.message}`));
    });

    child.on("close", () => {
      if (timedOut) {
        finish({ status: "timeout", answer: null, stderr_excerpt: tail(stderrBuf) });
        return;
      }
      let body: { status?: unknown; answer?: unknown; detail?: unknown };
      try {
        body = JSON.parse(resultLine.split("\n", 1)[0]);
      } catch {
        finish(failure(tail(stderrBuf) || "the job exited without reporting a result"));
        return;
      }
      const status = body.status;
      if (status !== "ok" && status !== "error" && status !== "forbidden") {
        finish(failure(`job reported an unknown status: ${String(status)}`));
        return;
      }
      finish({
        status,
        answer: typeof body.answer === "string" ? body.answer : null,
        stderr_excerpt: typeof body.detail === "string" && body.detail !== ""
          ? body.detail
          : tail(stderrBuf),
      });
    });
  });
}

// --------------------------------------------------------------- health

const VERSION_PROBE =
  'import sys\nans = "%d.%d" % sys.version_info[:2]\n';
const NETWORK_PROBE =
  'import socket\nsocket.create_connection(("127.0.0.1", 9), timeout=1)\nans = "open"\n';
const FILESYSTEM_PROBE =
  'open("/scratch-escape-probe", "w")\nans = "open"\n';

export interface HealthReport {
  ok: boolean;
  service: string;
  interpreter: string | null;
  probes: Record<string, string>;
}

/** Drive the three isolation probes through the regular execution path and
 * report whether every guard answered the way a healthy install must. */
export async function healthReport(): Promise<HealthReport> {
  const version = await executeRequest({ code: VERSION_PROBE, timeout_ms: 15000 });
  const network = await executeRequest({ code: NETWORK_PROBE, timeout_ms: 15000 });
  const filesystem = await executeRequest({ code: FILESYSTEM_PROBE, timeout_ms: 15000 });
  const ok =
    version.status === "ok" &&
    typeof version.answer === "string" &&
    /^3\.\d+$/.test(version.answer) &&
    network.status === "forbidden" &&
    filesystem.status === "forbidden";
  return {
    ok,
    service: "code-exec-sandbox 0.1.0",
    interpreter: version.status === "ok" ? version.answer : null,
    probes: {
      interpreter: version.status,
      network: network.status,
      filesystem: filesystem.status,
    },
  };
}
