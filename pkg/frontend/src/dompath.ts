// Element-path addressing, shared with the coordinator's selector language:
// each step "name[i]" selects the i-th same-named element child. Paths are
// anchored beneath the page root, so computed paths start at "body".

export interface PathStep {
  tag: string;
  index: number;
}

const STEP_RE = /^([a-zA-Z][a-zA-Z0-9-]*)(?:\[(\d+)\])?$/;

export function normalizeWs(text: string): string {
  return text.replace(/[\s  ]+/g, ' ').trim();
}

export function elementText(el: Element): string {
  return normalizeWs(el.textContent ?? '');
}

export function computeDomPath(element: Element): string {
  const steps: string[] = [];
  let node: Element | null = element;
  while (node && node.parentElement) {
    let index = 1;
    let sibling = node.previousElementSibling;
    while (sibling) {
      if (sibling.tagName === node.tagName) index++;
      sibling = sibling.previousElementSibling;
    }
    steps.unshift(`${node.tagName.toLowerCase()}[${index}]`);
    node = node.parentElement;
  }
  return steps.join('/');
}

export function parsePath(expression: string): PathStep[] | null {
  const trimmed = expression.trim().replace(/^\/+|\/+$/g, '');
  if (!trimmed) return null;
  const steps: PathStep[] = [];
  for (const raw of trimmed.split('/')) {
    const m = STEP_RE.exec(raw.trim());
    if (!m) return null;
    const index = m[2] ? parseInt(m[2], 10) : 1;
    if (index < 1) return null;
    steps.push({ tag: m[1].toLowerCase(), index });
  }
  return steps;
}

function descend(start: Document | Element, steps: PathStep[]): Element | null {
  let ctx: Document | Element = start;
  for (const step of steps) {
    const matches = Array.from(ctx.children).filter(
      (c) => c.tagName.toLowerCase() === step.tag,
    );
    if (matches.length < step.index) return null;
    ctx = matches[step.index - 1];
  }
  return ctx as Element;
}

// Resolution mirrors the coordinator: try at the document, then beneath the
// single root element so "body/..." works on full pages; a leading "html"
// step is therefore optional.
export function resolveDomPath(doc: Document, expression: string): Element | null {
  const steps = parsePath(expression);
  if (!steps) return null;
  const direct = descend(doc, steps);
  if (direct) return direct;
  const root = doc.documentElement;
  if (root && steps[0].tag !== root.tagName.toLowerCase()) {
    return descend(root, steps);
  }
  return null;
}
