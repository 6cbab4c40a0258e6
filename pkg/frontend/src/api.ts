// Coordinator REST client: submit a check, poll until the wave completes.

import { HighlightCapture } from './capture';

export class CoordinatorUnreachable extends Error {}
export class CheckRejected extends Error {}

export interface SelectorJson {
  kind: string;
  expression: string;
  recorded_at: number;
}

export interface PriceEntry {
  price?: string; // canonical "CODE amount"
  country?: string;
  error?: string;
}

export interface GateInfo {
  passed: boolean;
  observed_gap: string;
  max_currency_gap: string;
  max_min_ratio: string;
}

export interface CheckStatus {
  check_id: string;
  status: 'queued' | 'running' | 'done' | 'failed';
  error: string | null;
  prices: Record<string, PriceEntry>;
  gate: GateInfo | null;
  reps_done: number;
  product_uri: string;
}

export function selectorForCapture(capture: HighlightCapture): SelectorJson {
  return {
    kind: 'dom-path',
    expression: capture.path,
    recorded_at: capture.capturedAt,
  };
}

export interface ClientOptions {
  installationId: string;
  fetchFn?: typeof fetch;
  pollIntervalMs?: number;
  pollBudgetMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class CoordinatorClient {
  private readonly baseUrl: string;
  private readonly fetchFn: typeof fetch;
  private readonly installationId: string;
  private readonly pollIntervalMs: number;
  private readonly pollBudgetMs: number;
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(baseUrl: string, options: ClientOptions) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
    this.fetchFn = options.fetchFn ?? fetch;
    this.installationId = options.installationId;
    this.pollIntervalMs = options.pollIntervalMs ?? 2000;
    this.pollBudgetMs = options.pollBudgetMs ?? 60000;
    this.sleep = options.sleep ?? defaultSleep;
  }

  async submitCheck(capture: HighlightCapture): Promise<string> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/v1/checks`, {
        method: 'POST',
        headers: {
          'Content-Type': 'application/json',
          'X-Installation-Id': this.installationId,
        },
        // only the URI, selector and opaque installation id leave the page
        body: JSON.stringify({
          product_uri: capture.pageUri,
          selector: selectorForCapture(capture),
        }),
      });
    } catch (err) {
      throw new CoordinatorUnreachable(String(err));
    }
    if (!response.ok) {
      const body = await response.text();
      throw new CheckRejected(`coordinator said ${response.status}: ${body}`);
    }
    const payload = (await response.json()) as { check_id: string };
    return payload.check_id;
  }

  async getCheck(checkId: string): Promise<CheckStatus> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/v1/checks/${checkId}`);
    } catch (err) {
      throw new CoordinatorUnreachable(String(err));
    }
    if (!response.ok) {
      throw new CheckRejected(`status fetch failed: ${response.status}`);
    }
    return (await response.json()) as CheckStatus;
  }

  async waitForResult(checkId: string): Promise<CheckStatus> {
    const deadline = Date.now() + this.pollBudgetMs;
    for (;;) {
      const status = await this.getCheck(checkId);
      if (status.status === 'done' || status.status === 'failed') {
        return status;
      }
      if (Date.now() + this.pollIntervalMs > deadline) {
        throw new CoordinatorUnreachable(
          `no result within ${this.pollBudgetMs} ms`,
        );
      }
      await this.sleep(this.pollIntervalMs);
    }
  }
}
