// Entry point for one execution request: a single JSON line on stdin
// ({"code", "timeout_ms", "memory_cap_bytes"}) becomes a single JSON line
// on stdout ({"status", "answer", "stderr_excerpt"}), and the exit code
// mirrors the status. `--health` instead runs the isolation probes and
// prints the report.

import { EXIT_CODES, ExecResult, executeRequest, healthReport } from "./runner";

function emit(result: ExecResult): never {
  process.stdout.write(JSON.stringify(result) + "\n");
  process.exit(EXIT_CODES[result.status]);
}

function readRequestLine(): Promise<string> {
  return new Promise((resolve) => {
    let buffer = "";
    process.stdin.setEncoding("utf8");
    process.stdin.on("data", (chunk: string) => {
      buffer += chunk;
      const newline = buffer.indexOf("\n");
      if (newline >= 0) {
        process.stdin.pause();
        resolve(buffer.slice(0, newline));
      }
    });
    process.stdin.on("end", () => resolve(buffer));
    process.stdin.on("error", () => resolve(buffer));
  });
}

async function main(): Promise<void> {
  if (process.argv.includes("--health")) {
    const report = await healthReport();
    process.stdout.write(JSON.stringify(report) + "\n");
    process.exit(report.ok ? 0 : 1);
  }
  const line = await readRequestLine();
  let request: unknown;
  try {
    request = JSON.parse(line);
  } catch {
    emit({ status: "error", answer: null, stderr_excerpt: "request is not valid JSON" });
  }
  if (typeof request !== "object" || request === null) {
    emit({ status: "error", answer: null, stderr_excerpt: "request is not a JSON object" });
  }
  emit(await executeRequest(request as { code: string }));
}

main();
