// Extension round-trip against recorded simulator/coordinator fixtures:
// highlight -> capture -> check -> panel shows the exact per-region policy
// prices, and the captured selector re-evaluated on every stored snapshot
// reproduces the highlighted/displayed price text.

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { CheckStatus, CoordinatorClient } from '../src/api';
import { captureHighlight } from '../src/capture';
import { elementText, normalizeWs, resolveDomPath } from '../src/dompath';
import { buildPanelModel, renderPanel } from '../src/panel';
import { getInstallationId, memoryStore } from '../src/storage';

const FIXTURES = join(process.cwd(), 'test', 'fixtures');

function fixture(name: string): string {
  return readFileSync(join(FIXTURES, name), 'utf-8');
}

interface Truth {
  product_uri: string;
  selector_expression: string;
  regions: Record<string, { canonical: string; display_text: string }>;
}

const truth: Truth = JSON.parse(fixture('policy-truth.json'));
const submitResponse = JSON.parse(fixture('submit-response.json'));
const checkStatus: CheckStatus = JSON.parse(fixture('check-status.json'));

function docFrom(html: string): Document {
  return new DOMParser().parseFromString(html, 'text/html');
}

describe('extension round trip against the simulator fixtures', () => {
  it('capture on the live page yields the template selector', () => {
    const doc = docFrom(fixture('page-us-east.html'));
    const priceNode = resolveDomPath(doc, truth.selector_expression)!;
    const range = doc.createRange();
    range.selectNodeContents(priceNode);
    const capture = captureHighlight(range, truth.product_uri, doc);
    expect(capture.path).toBe(truth.selector_expression);
    expect(capture.selectedText).toBe(normalizeWs(truth.regions['us-east'].display_text));
    expect(capture.preview?.canonical).toBe(truth.regions['us-east'].canonical);
    expect(capture.pageUri).toBe(truth.product_uri);
  });

  it('submit + poll + panel shows the exact per-region policy prices', async () => {
    const doc = docFrom(fixture('page-us-east.html'));
    const priceNode = resolveDomPath(doc, truth.selector_expression)!;
    const range = doc.createRange();
    range.selectNodeContents(priceNode);
    const capture = captureHighlight(range, truth.product_uri, doc);

    const calls: string[] = [];
    const fetchFn = (async (url: any, init?: any) => {
      calls.push(`${init?.method ?? 'GET'} ${url}`);
      const body = init?.method === 'POST' ? submitResponse : checkStatus;
      return new Response(JSON.stringify(body), { status: 200 });
    }) as typeof fetch;

    const client = new CoordinatorClient('http://127.0.0.1:7711', {
      installationId: await getInstallationId(memoryStore()),
      fetchFn,
      sleep: async () => {},
    });
    const checkId = await client.submitCheck(capture);
    expect(checkId).toBe(submitResponse.check_id);
    const status = await client.waitForResult(checkId);

    const model = buildPanelModel(status);
    expect(model.state).toBe('variation');
    const prices = Object.fromEntries(
      model.rows.map((r) => [r.vantage, r.price]));
    for (const [region, expected] of Object.entries(truth.regions)) {
      expect(prices[region]).toBe(expected.canonical);
    }
    const panel = renderPanel(model, document);
    for (const expected of Object.values(truth.regions)) {
      expect(panel.textContent).toContain(expected.canonical);
    }
    expect(calls[0]).toBe('POST http://127.0.0.1:7711/v1/checks');
  });

  it('selector re-evaluation on every stored snapshot reproduces the price text', () => {
    for (const [region, expected] of Object.entries(truth.regions)) {
      const doc = docFrom(fixture(`page-${region}.html`));
      const node = resolveDomPath(doc, truth.selector_expression);
      expect(node, region).not.toBeNull();
      expect(elementText(node!)).toBe(normalizeWs(expected.display_text));
    }
  });

  it('re-evaluation on the originally highlighted page matches the selection', () => {
    const doc = docFrom(fixture('page-us-east.html'));
    const priceNode = resolveDomPath(doc, truth.selector_expression)!;
    const range = doc.createRange();
    range.selectNodeContents(priceNode);
    const capture = captureHighlight(range, truth.product_uri, doc);
    const again = resolveDomPath(docFrom(fixture('page-us-east.html')),
                                 capture.path);
    expect(elementText(again!)).toBe(capture.selectedText);
  });
});
