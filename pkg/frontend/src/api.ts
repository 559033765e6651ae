/** HTTP client for the query service with single-in-flight semantics.

Submitting while a request is pending aborts the pending one, so the grid
can only ever show the response to the latest submission.
*/

import type { ErrorDetail, QueryPayload, QueryResponse, RankedResult } from "./types.js";

export class QueryError extends Error {
  constructor(
    readonly status: number,
    readonly detail: ErrorDetail | null,
  ) {
    super(detail?.message ?? `query failed with status ${status}`);
    this.name = "QueryError";
  }
}

export type FetchLike = (input: string, init: RequestInit) => Promise<Response>;

export class QueryClient {
  private pending: AbortController | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  get hasPending(): boolean {
    return this.pending !== null;
  }

  /** POST the payload to /query; cancels any still-pending submission. */
  async submit(payload: QueryPayload): Promise<RankedResult[]> {
    this.pending?.abort();
    const controller = new AbortController();
    this.pending = controller;
    try {
      const response = await this.fetchFn(`${this.baseUrl}/query`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
        signal: controller.signal,
      });
      if (!response.ok) {
        const body = await response.json().catch(() => null);
        throw new QueryError(response.status, body?.detail ?? null);
      }
      const body = (await response.json()) as QueryResponse;
      return body.results;
    } finally {
      if (this.pending === controller) this.pending = null;
    }
  }
}

export function isAbort(error: unknown): boolean {
  return error instanceof DOMException && error.name === "AbortError";
}
