// Per-location price panel: pure model building plus DOM rendering.
// A price string the panel cannot parse is shown as an explicit failure,
// never as a price.

import { CheckStatus } from './api';

const CANONICAL_RE = /^([A-Z]{3}) (\d+\.\d{2})$/;

export interface PanelRow {
  vantage: string;
  country: string;
  price: string | null;
  error: string | null;
  isMax: boolean;
  isMin: boolean;
}

export type PanelState = 'variation' | 'no-variation' | 'failed' | 'offline';

export interface PanelModel {
  state: PanelState;
  rows: PanelRow[];
  ratioBadge: string | null; // e.g. "×1.29"
  gatePassed: boolean | null;
  failureCount: number;
  message: string | null;
}

export function offlineModel(): PanelModel {
  return {
    state: 'offline',
    rows: [],
    ratioBadge: null,
    gatePassed: null,
    failureCount: 0,
    message: 'coordinator unreachable; capture kept for retry',
  };
}

export function buildPanelModel(status: CheckStatus): PanelModel {
  if (status.status === 'failed') {
    return {
      state: 'failed',
      rows: [],
      ratioBadge: null,
      gatePassed: null,
      failureCount: 0,
      message: status.error ?? 'check failed',
    };
  }
  const rows: PanelRow[] = [];
  for (const [vantage, entry] of Object.entries(status.prices)) {
    if (entry.price && CANONICAL_RE.test(entry.price)) {
      rows.push({
        vantage,
        country: entry.country ?? '',
        price: entry.price,
        error: null,
        isMax: false,
        isMin: false,
      });
    } else {
      rows.push({
        vantage,
        country: entry.country ?? '',
        price: null,
        error: entry.error ?? `unparseable price ${JSON.stringify(entry.price)}`,
        isMax: false,
        isMin: false,
      });
    }
  }
  rows.sort((a, b) => a.vantage.localeCompare(b.vantage));

  // highlight max/min among the most common currency (cross-currency
  // comparison is the gate's job, reported via the badge)
  const byCurrency = new Map<string, PanelRow[]>();
  for (const row of rows) {
    if (!row.price) continue;
    const currency = row.price.slice(0, 3);
    const group = byCurrency.get(currency) ?? [];
    group.push(row);
    byCurrency.set(currency, group);
  }
  let modal: PanelRow[] = [];
  for (const group of byCurrency.values()) {
    if (group.length > modal.length) modal = group;
  }
  if (modal.length >= 2) {
    const amount = (row: PanelRow) => parseFloat(row.price!.slice(4));
    const max = Math.max(...modal.map(amount));
    const min = Math.min(...modal.map(amount));
    if (max > min) {
      for (const row of modal) {
        if (amount(row) === max) row.isMax = true;
        if (amount(row) === min) row.isMin = true;
      }
    }
  }

  const gatePassed = status.gate?.passed ?? null;
  let ratioBadge: string | null = null;
  if (status.gate) {
    const ratio = parseFloat(status.gate.max_min_ratio);
    if (Number.isFinite(ratio)) ratioBadge = `×${ratio.toFixed(2)}`;
  }
  return {
    state: gatePassed ? 'variation' : 'no-variation',
    rows,
    ratioBadge,
    gatePassed,
    failureCount: rows.filter((r) => r.error !== null).length,
    message: gatePassed ? null : 'no variation detected',
  };
}

export function renderPanel(model: PanelModel, doc: Document): HTMLElement {
  const root = doc.createElement('div');
  root.className = `pricescope-panel pricescope-${model.state}`;

  const header = doc.createElement('div');
  header.className = 'pricescope-header';
  if (model.state === 'offline') {
    header.textContent = model.message ?? 'offline';
    root.appendChild(header);
    return root;
  }
  if (model.state === 'failed') {
    header.textContent = `check failed: ${model.message ?? ''}`;
    root.appendChild(header);
    return root;
  }
  header.textContent =
    model.state === 'variation' ? 'price variation detected' : 'no variation detected';
  if (model.ratioBadge) {
    const badge = doc.createElement('span');
    badge.className = 'pricescope-badge';
    badge.textContent = model.ratioBadge;
    header.appendChild(badge);
  }
  root.appendChild(header);

  const list = doc.createElement('ul');
  list.className = 'pricescope-rows';
  for (const row of model.rows) {
    const item = doc.createElement('li');
    item.dataset.vantage = row.vantage;
    if (row.price) {
      item.textContent = `${row.vantage}: ${row.price}`;
      if (row.isMax) item.classList.add('pricescope-max');
      if (row.isMin) item.classList.add('pricescope-min');
    } else {
      item.textContent = `${row.vantage}: failed (${row.error})`;
      item.classList.add('pricescope-failure');
    }
    list.appendChild(item);
  }
  root.appendChild(list);
  return root;
}
