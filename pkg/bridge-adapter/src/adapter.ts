/**
 * Request handling: one benchmark instance, strictly sequential,
 * exactly one reply per request line.
 */

import { createInterface } from "node:readline";

import type { Benchmark, StepOutcome } from "./benchmarks.js";
import {
  type Reply,
  type StateReply,
  RequestError,
  formatReply,
  parseRequest,
} from "./protocol.js";

export interface SessionOptions {
  /**
   * When set, subgoal flags come from matching these patterns against the
   * benchmark's state text instead of its own progress annotations. Required
   * for benchmarks that expose no annotations.
   */
  subgoalPatterns?: RegExp[];
}

export interface Verdict {
  reply?: Reply;
  shutdown: boolean;
}

export class Session {
  private benchmark: Benchmark;
  private patterns?: RegExp[];
  private flagCount: number | null = null;
  private started = false;

  constructor(benchmark: Benchmark, options: SessionOptions = {}) {
    this.benchmark = benchmark;
    this.patterns = options.subgoalPatterns;
  }

  private flags(outcome: StepOutcome): boolean[] {
    if (this.patterns) {
      return this.patterns.map((re) => re.test(outcome.stateText));
    }
    if (outcome.progress) {
      return outcome.progress.map(Boolean);
    }
    throw new Error("benchmark has no progress annotations; supply subgoal patterns");
  }

  private stateReply(outcome: StepOutcome, goal?: string): Reply {
    const flags = this.flags(outcome);
    if (this.flagCount === null) {
      this.flagCount = flags.length;
    } else if (flags.length !== this.flagCount) {
      throw new Error(
        `subgoal vector length changed mid-episode: ${flags.length} != ${this.flagCount}`,
      );
    }
    const reply: StateReply = {
      observation: outcome.observation,
      ...(goal === undefined ? {} : { goal }),
      subgoals: flags,
      success: outcome.success,
      done: outcome.done,
    };
    if (outcome.validActions) {
      reply.valid_actions = outcome.validActions;
    }
    return reply;
  }

  /** Handle one request line; every path yields at most one reply. */
  handleLine(line: string): Verdict {
    let request;
    try {
      request = parseRequest(line);
    } catch (err) {
      const message = err instanceof RequestError ? err.message : String(err);
      return { reply: { error: message }, shutdown: false };
    }

    if (request.op === "shutdown") {
      return { shutdown: true };
    }

    if (request.op === "reset") {
      try {
        this.flagCount = null; // new episode, flag width re-locks
        const outcome = this.benchmark.reset();
        this.started = true;
        return { reply: this.stateReply(outcome, this.benchmark.goal), shutdown: false };
      } catch (err) {
        return { reply: { error: describe(err) }, shutdown: false };
      }
    }

    if (!this.started) {
      return { reply: { error: "reset required before step" }, shutdown: false };
    }
    try {
      const outcome = this.benchmark.step(request.action);
      return { reply: this.stateReply(outcome), shutdown: false };
    } catch (err) {
      return { reply: { error: describe(err) }, shutdown: false };
    }
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

export interface ServeOptions {
  input: NodeJS.ReadableStream;
  output: NodeJS.WritableStream;
  /** Called once when the session ends; receives the process exit code. */
  onExit: (code: number) => void;
}

export function serve(session: Session, options: ServeOptions): void {
  const rl = createInterface({ input: options.input, crlfDelay: Infinity });
  let finished = false;
  const finish = (code: number) => {
    if (finished) return;
    finished = true;
    rl.close();
    options.onExit(code);
  };
  rl.on("line", (line) => {
    if (finished || !line.trim()) {
      return;
    }
    const verdict = session.handleLine(line);
    if (verdict.reply) {
      options.output.write(formatReply(verdict.reply) + "\n");
    }
    if (verdict.shutdown) {
      finish(0);
    }
  });
  // Driver hanging up without a shutdown op is a normal way to end.
  rl.on("close", () => finish(0));
}
