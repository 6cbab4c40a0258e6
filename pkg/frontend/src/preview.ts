// Lightweight price reading for the capture preview. Mirrors the
// coordinator's hint-free separator rules: with both "." and "," the
// rightmost is the decimal separator; a lone separator before exactly
// 3 digits is grouping when the grouped value exceeds 999; a lone
// separator before 1-4 digits is a decimal point.

const SYMBOLS: Array<[string, string]> = [
  ['R$', 'BRL'],
  ['€', 'EUR'],
  ['£', 'GBP'],
  ['¥', 'JPY'],
  ['$', 'USD'],
];

const CODES = ['USD', 'EUR', 'GBP', 'BRL', 'JPY', 'CAD', 'AUD', 'NZD'];

export interface PricePreview {
  amount: string; // plain decimal, 2 fraction digits
  currency: string | null;
  canonical: string | null; // "EUR 49.05" when the currency is known
}

const REGION_RE = /\d(?:[\d.,    ']*\d)?/g;

function stripGrouping(intPart: string, sep: string): string | null {
  const groups = intPart.split(sep);
  if (groups.length === 1) return /^\d+$/.test(intPart) ? intPart : null;
  if (!/^\d{1,3}$/.test(groups[0])) return null;
  for (const g of groups.slice(1)) {
    if (!/^\d{3}$/.test(g)) return null;
  }
  return groups.join('');
}

function interpret(region: string): string | null {
  let cleaned = '';
  for (let i = 0; i < region.length; i++) {
    const ch = region[i];
    if (" '   ".includes(ch)) {
      const prevDigit = i > 0 && /\d/.test(region[i - 1]);
      const nextDigit = i + 1 < region.length && /\d/.test(region[i + 1]);
      if (!prevDigit || !nextDigit) return null;
      continue;
    }
    cleaned += ch;
  }
  const s = cleaned.replace(/^[.,]+|[.,]+$/g, '');
  if (!s) return null;
  const dots = (s.match(/\./g) ?? []).length;
  const commas = (s.match(/,/g) ?? []).length;

  if (dots && commas) {
    const dchar = s.lastIndexOf('.') > s.lastIndexOf(',') ? '.' : ',';
    const gchar = dchar === '.' ? ',' : '.';
    const parts = s.split(dchar);
    if (parts.length !== 2) return null;
    const [intPart, frac] = parts;
    if (!/^\d{1,4}$/.test(frac) || !intPart.includes(gchar)) return null;
    const digits = stripGrouping(intPart, gchar);
    return digits === null ? null : `${digits}.${frac}`;
  }
  if (!dots && !commas) {
    return /^\d+$/.test(s) ? s : null;
  }
  const sep = dots ? '.' : ',';
  const count = dots || commas;
  if (count > 1) {
    return stripGrouping(s, sep);
  }
  const [head, tail] = s.split(sep);
  if (!/^\d*$/.test(head) || !/^\d+$/.test(tail)) return null;
  if (tail.length === 3) {
    const grouped = stripGrouping(s, sep);
    if (grouped !== null && parseInt(grouped, 10) > 999) return grouped;
    return `${head || '0'}.${tail}`;
  }
  if (tail.length >= 1 && tail.length <= 4) return `${head || '0'}.${tail}`;
  return null;
}

function toTwoPlaces(amount: string): string {
  const [whole, frac = ''] = amount.split('.');
  const padded = (frac + '00').slice(0, 2);
  const extra = frac.slice(2);
  if (extra && /[1-9]/.test(extra)) {
    // round half up on the third fraction digit
    let cents = parseInt(whole + padded, 10);
    if (parseInt(extra[0], 10) >= 5) cents++;
    const text = cents.toString().padStart(3, '0');
    return `${text.slice(0, -2)}.${text.slice(-2)}`;
  }
  return `${whole}.${padded}`;
}

function detectCurrency(text: string): string | null {
  for (const code of CODES) {
    if (new RegExp(`\\b${code}\\b`).test(text)) return code;
  }
  for (const [symbol, code] of SYMBOLS) {
    if (text.includes(symbol)) return code;
  }
  return null;
}

export function parsePricePreview(text: string): PricePreview | null {
  const normalized = text.replace(/[\s]+/g, ' ');
  const regions: RegExpExecArray[] = [];
  let m: RegExpExecArray | null;
  REGION_RE.lastIndex = 0;
  while ((m = REGION_RE.exec(normalized)) !== null) {
    const after = normalized.slice(m.index + m[0].length).trimStart();
    if (!after.startsWith('%')) regions.push(m);
  }
  if (regions.length === 0) return null;
  let chosen: RegExpExecArray | null = regions.length === 1 ? regions[0] : null;
  if (!chosen) {
    const markers = SYMBOLS.map(([s]) => s).concat(CODES);
    for (const candidate of regions) {
      const before = normalized.slice(0, candidate.index).trimEnd();
      const after = normalized
        .slice(candidate.index + candidate[0].length)
        .trimStart();
      if (
        markers.some((mk) => before.endsWith(mk) || after.startsWith(mk))
      ) {
        chosen = candidate;
        break;
      }
    }
  }
  if (!chosen) return null;
  const amount = interpret(chosen[0]);
  if (amount === null || !/[1-9]/.test(amount)) return null;
  const twoPlaces = toTwoPlaces(amount);
  const currency = detectCurrency(normalized);
  return {
    amount: twoPlaces,
    currency,
    canonical: currency ? `${currency} ${twoPlaces}` : null,
  };
}
