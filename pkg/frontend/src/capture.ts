// Turning a user text selection into a remotely evaluable price locator.

import { computeDomPath, elementText, normalizeWs, resolveDomPath } from './dompath';
import { parsePricePreview, PricePreview } from './preview';

export class NoDigitsInSelection extends Error {}
export class MultiElementSelection extends Error {}
export class UnresolvableSelection extends Error {}

export interface HighlightCapture {
  pageUri: string;
  path: string; // dom-path selector expression
  selectedText: string;
  capturedAt: number; // seconds since epoch
  preview: PricePreview | null;
}

export interface RangeLike {
  startContainer: Node;
  endContainer: Node;
  toString(): string;
}

function owningElement(node: Node): Element | null {
  return node.nodeType === Node.ELEMENT_NODE
    ? (node as Element)
    : node.parentElement;
}

export function captureHighlight(
  range: RangeLike,
  pageUri: string,
  doc: Document,
): HighlightCapture {
  const selectedText = normalizeWs(range.toString());
  if (!/\d/.test(selectedText)) {
    throw new NoDigitsInSelection(`no digits in ${JSON.stringify(selectedText)}`);
  }
  const start = owningElement(range.startContainer);
  const end = owningElement(range.endContainer);
  if (!start || !end || start !== end) {
    throw new MultiElementSelection('selection spans more than one element');
  }
  const path = computeDomPath(start);
  const resolved = resolveDomPath(doc, path);
  if (!resolved || !elementText(resolved).includes(selectedText)) {
    throw new UnresolvableSelection(`path ${path} does not round-trip`);
  }
  return {
    pageUri,
    path,
    selectedText,
    capturedAt: Date.now() / 1000,
    preview: parsePricePreview(selectedText),
  };
}

export function captureCurrentSelection(win: Window): HighlightCapture {
  const selection = win.getSelection();
  if (!selection || selection.rangeCount === 0) {
    throw new NoDigitsInSelection('nothing selected');
  }
  return captureHighlight(
    selection.getRangeAt(0),
    win.location.href,
    win.document,
  );
}
