/**
 * Wire types for the newline-delimited JSON bridge protocol.
 *
 * One JSON document per line, UTF-8. The driver writes request lines to
 * the adapter's stdin; the adapter answers each with exactly one reply
 * line on stdout. A reply either carries environment state or a single
 * error field, never both.
 */

export type Request =
  | { op: "reset" }
  | { op: "step"; action: string }
  | { op: "shutdown" };

export interface StateReply {
  observation: string;
  goal?: string;
  subgoals: boolean[];
  success: boolean;
  done: boolean;
  valid_actions?: string[];
}

export interface ErrorReply {
  error: string;
}

export type Reply = StateReply | ErrorReply;

/** Raised when a request line cannot be turned into a Request. */
export class RequestError extends Error {}

export function parseRequest(line: string): Request {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch {
    throw new RequestError("parse");
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new RequestError("request is not an object");
  }
  const op = (doc as Record<string, unknown>).op;
  if (op === "reset" || op === "shutdown") {
    return { op };
  }
  if (op === "step") {
    const action = (doc as Record<string, unknown>).action;
    if (typeof action !== "string") {
      throw new RequestError("step requires a string action");
    }
    return { op, action };
  }
  throw new RequestError(`unknown op: ${JSON.stringify(op)}`);
}

export function formatReply(reply: Reply): string {
  return JSON.stringify(reply);
}
