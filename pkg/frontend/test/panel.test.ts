import { describe, expect, it } from 'vitest';

import { CheckStatus } from '../src/api';
import { buildPanelModel, offlineModel, renderPanel } from '../src/panel';

function status(overrides: Partial<CheckStatus> = {}): CheckStatus {
  return {
    check_id: 'abc',
    status: 'done',
    error: null,
    prices: {
      ny: { price: 'USD 10.00', country: 'us' },
      chi: { price: 'USD 12.00', country: 'us' },
      hel: { price: 'USD 11.00', country: 'fi' },
    },
    gate: {
      passed: true,
      observed_gap: '1.200000',
      max_currency_gap: '1.000000',
      max_min_ratio: '1.200000',
    },
    reps_done: 1,
    product_uri: 'http://shop.test/product/p1',
    ...overrides,
  };
}

describe('buildPanelModel', () => {
  it('marks max and min and formats the ratio badge', () => {
    const model = buildPanelModel(status());
    expect(model.state).toBe('variation');
    expect(model.ratioBadge).toBe('×1.20');
    const byVantage = Object.fromEntries(model.rows.map((r) => [r.vantage, r]));
    expect(byVantage.chi.isMax).toBe(true);
    expect(byVantage.ny.isMin).toBe(true);
    expect(byVantage.hel.isMax).toBe(false);
    expect(byVantage.hel.isMin).toBe(false);
  });

  it('shows the no-variation state when the gate blocks', () => {
    const model = buildPanelModel(status({
      prices: {
        ny: { price: 'USD 10.00' },
        chi: { price: 'USD 10.00' },
      },
      gate: {
        passed: false,
        observed_gap: '1.000000',
        max_currency_gap: '1.000000',
        max_min_ratio: '1.000000',
      },
    }));
    expect(model.state).toBe('no-variation');
    expect(model.message).toBe('no variation detected');
    expect(model.rows.every((r) => !r.isMax && !r.isMin)).toBe(true);
  });

  it('renders per-vantage failures explicitly', () => {
    const model = buildPanelModel(status({
      prices: {
        ny: { price: 'USD 10.00' },
        chi: { price: 'USD 12.00' },
        broken: { error: 'SelectorMiss: page layout changed' },
      },
    }));
    const broken = model.rows.find((r) => r.vantage === 'broken')!;
    expect(broken.price).toBeNull();
    expect(broken.error).toContain('SelectorMiss');
    expect(model.failureCount).toBe(1);
  });

  it('never displays a price it cannot parse', () => {
    const model = buildPanelModel(status({
      prices: {
        ny: { price: 'USD 10.00' },
        odd: { price: 'garbage 12,00' },
        chi: { price: 'USD 12.00' },
      },
    }));
    const odd = model.rows.find((r) => r.vantage === 'odd')!;
    expect(odd.price).toBeNull();
    expect(odd.error).toContain('unparseable');
  });

  it('reports failed checks', () => {
    const model = buildPanelModel(status({ status: 'failed',
                                           error: 'quorum failure',
                                           prices: {}, gate: null }));
    expect(model.state).toBe('failed');
    expect(model.message).toBe('quorum failure');
  });
});

describe('renderPanel', () => {
  it('renders rows with max/min classes', () => {
    const el = renderPanel(buildPanelModel(status()), document);
    const rows = Array.from(el.querySelectorAll('li'));
    expect(rows.map((r) => r.textContent)).toEqual([
      'chi: USD 12.00', 'hel: USD 11.00', 'ny: USD 10.00',
    ]);
    expect(el.querySelector('.pricescope-max')?.textContent).toContain('chi');
    expect(el.querySelector('.pricescope-min')?.textContent).toContain('ny');
    expect(el.querySelector('.pricescope-badge')?.textContent).toBe('×1.20');
  });

  it('renders the offline banner', () => {
    const el = renderPanel(offlineModel(), document);
    expect(el.className).toContain('pricescope-offline');
    expect(el.textContent).toContain('capture kept for retry');
  });
});
