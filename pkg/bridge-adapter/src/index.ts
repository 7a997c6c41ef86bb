import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { Session, serve } from "./adapter.js";
import { loadBenchmark, suiteNames } from "./benchmarks.js";

const USAGE = `usage: earlyexit-adapter --env <name> --task <index> [--subgoal-patterns <file>]

Serves one benchmark environment over newline-delimited JSON on
stdin/stdout. Requests: {"op":"reset"} | {"op":"step","action":...} |
{"op":"shutdown"}. Replies carry observation, subgoal flags, success
and done; logging goes to stderr only.

  --env               environment name (${suiteNames().join(", ")})
  --task              task index within the environment (default 0)
  --subgoal-patterns  JSON file with one regex per subgoal, matched
                      against the benchmark's state text instead of its
                      native progress annotations
`;

function fail(message: string): never {
  process.stderr.write(`earlyexit-adapter: ${message}\n`);
  process.exit(2);
}

function loadPatterns(path: string): RegExp[] {
  let doc: unknown;
  try {
    doc = JSON.parse(readFileSync(path, "utf8"));
  } catch (err) {
    fail(`cannot read patterns file ${path}: ${err instanceof Error ? err.message : err}`);
  }
  if (!Array.isArray(doc) || doc.length === 0 || !doc.every((p) => typeof p === "string")) {
    fail(`patterns file ${path} must hold a non-empty JSON array of regex strings`);
  }
  return doc.map((src) => {
    try {
      return new RegExp(src);
    } catch (err) {
      fail(`bad pattern ${JSON.stringify(src)}: ${err instanceof Error ? err.message : err}`);
    }
  });
}

function main(argv: string[]): void {
  let args;
  try {
    args = parseArgs({
      args: argv,
      options: {
        env: { type: "string" },
        task: { type: "string", default: "0" },
        "subgoal-patterns": { type: "string" },
        help: { type: "boolean", short: "h", default: false },
      },
      strict: true,
    });
  } catch (err) {
    fail(err instanceof Error ? err.message : String(err));
  }
  if (args.values.help) {
    process.stderr.write(USAGE);
    process.exit(0);
  }
  const envName = args.values.env;
  if (!envName) {
    fail("--env is required\n" + USAGE);
  }
  const taskIndex = Number(args.values.task);
  if (!Number.isInteger(taskIndex) || taskIndex < 0) {
    fail(`--task must be a non-negative integer, got ${JSON.stringify(args.values.task)}`);
  }
  const patternsPath = args.values["subgoal-patterns"];
  const patterns = patternsPath === undefined ? undefined : loadPatterns(patternsPath);

  let benchmark;
  try {
    benchmark = loadBenchmark(envName, taskIndex);
  } catch (err) {
    fail(err instanceof Error ? err.message : String(err));
  }

  // stdout is reserved for protocol lines; anything the benchmark prints
  // through console must land on stderr instead.
  console.log = (...chatter: unknown[]) => console.error(...chatter);
  console.info = console.log;
  console.debug = console.log;

  process.stderr.write(`earlyexit-adapter: serving ${envName} task ${taskIndex}\n`);
  serve(new Session(benchmark, { subgoalPatterns: patterns }), {
    input: process.stdin,
    output: process.stdout,
    onExit: (code) => {
      // Let queued stdout writes drain instead of cutting them off with
      // an immediate exit.
      process.exitCode = code;
      process.stdin.destroy();
    },
  });
}

main(process.argv.slice(2));
