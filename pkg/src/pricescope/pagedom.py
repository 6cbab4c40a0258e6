"""Minimal tolerant HTML document tree with element-path addressing.

Selectors only need a tiny structural language (element name + 1-based child
index per step), so the tree is built directly on the stdlib tolerant
tokenizer instead of pulling in a full HTML5 tree builder. Recovery rules:
void elements never open a scope, a handful of container tags close their
open sibling implicitly (li closes li, p closes p, ...), stray end tags are
ignored, and everything still open at EOF is closed.
"""
from __future__ import annotations

import re
from html.parser import HTMLParser

VOID_ELEMENTS = {
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
}

# tag -> set of open tags it implicitly closes when encountered as a sibling
_IMPLIED_CLOSE = {
    "li": {"li"},
    "p": {"p"},
    "option": {"option"},
    "tr": {"tr", "td", "th"},
    "td": {"td", "th"},
    "th": {"td", "th"},
    "dt": {"dt", "dd"},
    "dd": {"dt", "dd"},
}

_WS_RE = re.compile(r"[\s  ]+")


def normalize_ws(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


class Element:
    __slots__ = ("tag", "attrs", "children", "parent")

    def __init__(self, tag: str, attrs: dict[str, str], parent: "Element | None"):
        self.tag = tag
        self.attrs = attrs
        self.children: list[Element | str] = []
        self.parent = parent

    def child_elements(self) -> list["Element"]:
        return [c for c in self.children if isinstance(c, Element)]

    def text_content(self) -> str:
        out: list[str] = []

        def walk(node: Element) -> None:
            for child in node.children:
                if isinstance(child, str):
                    out.append(child)
                else:
                    walk(child)

        walk(self)
        return normalize_ws("".join(out))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<Element {self.tag} children={len(self.children)}>"


class Document:
    """Root of a parsed page; holds top-level elements and text."""

    def __init__(self) -> None:
        self.root = Element("#document", {}, None)

    @property
    def top_elements(self) -> list[Element]:
        return self.root.child_elements()

    def root_element(self) -> Element | None:
        tops = self.top_elements
        return tops[0] if len(tops) == 1 else None

    def iter_elements(self):
        stack = list(reversed(self.top_elements))
        while stack:
            el = stack.pop()
            yield el
            stack.extend(reversed(el.child_elements()))

    def iter_text_nodes(self):
        """Yield (parent element, normalized text) for non-empty text nodes."""

        def walk(node: Element):
            for child in node.children:
                if isinstance(child, str):
                    text = normalize_ws(child)
                    if text:
                        yield node, text
                else:
                    yield from walk(child)

        yield from walk(self.root)

    def page_language(self) -> str | None:
        for el in self.iter_elements():
            if el.tag == "html":
                lang = el.attrs.get("lang")
                return lang or None
        return None


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.document = Document()
        self._open: list[Element] = [self.document.root]

    def _top(self) -> Element:
        return self._open[-1]

    def handle_starttag(self, tag, attrs):
        implied = _IMPLIED_CLOSE.get(tag)
        if implied:
            while len(self._open) > 1 and self._top().tag in implied:
                self._open.pop()
        el = Element(tag, {k: (v or "") for k, v in attrs}, self._top())
        self._top().children.append(el)
        if tag not in VOID_ELEMENTS:
            self._open.append(el)

    def handle_startendtag(self, tag, attrs):
        el = Element(tag, {k: (v or "") for k, v in attrs}, self._top())
        self._top().children.append(el)

    def handle_endtag(self, tag):
        for i in range(len(self._open) - 1, 0, -1):
            if self._open[i].tag == tag:
                del self._open[i:]
                return
        # stray end tag: ignore

    def handle_data(self, data):
        if data:
            self._top().children.append(data)


def parse_document(text: str) -> Document:
    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()
    return builder.document


class PathSyntaxError(ValueError):
    """Raised for a malformed element-path expression."""


_STEP_RE = re.compile(r"^([a-zA-Z][a-zA-Z0-9-]*)(?:\[(\d+)\])?$")


def parse_path(expression: str) -> list[tuple[str, int]]:
    """Parse "body/div[2]/span[1]" into [(tag, 1-based index), ...]."""
    expression = expression.strip().strip("/")
    if not expression:
        raise PathSyntaxError("empty path expression")
    steps: list[tuple[str, int]] = []
    for raw in expression.split("/"):
        m = _STEP_RE.match(raw.strip())
        if not m:
            raise PathSyntaxError(f"bad path step {raw!r}")
        index = int(m.group(2)) if m.group(2) else 1
        if index < 1:
            raise PathSyntaxError(f"child index must be >= 1 in {raw!r}")
        steps.append((m.group(1).lower(), index))
    return steps


def _descend(start: Element, steps: list[tuple[str, int]]) -> Element | None:
    node = start
    for tag, index in steps:
        matches = [c for c in node.child_elements() if c.tag == tag]
        if len(matches) < index:
            return None
        node = matches[index - 1]
    return node


def resolve_path(doc: Document, expression: str) -> Element | None:
    """Resolve an element path against a document.

    Paths are anchored at the document node; when the first step misses there
    and the page has a single root element (usually <html>), resolution is
    retried beneath it so "body/..." works on full pages.
    """
    steps = parse_path(expression)
    found = _descend(doc.root, steps)
    if found is not None:
        return found
    root = doc.root_element()
    if root is not None and steps[0][0] != root.tag:
        return _descend(root, steps)
    return None


def path_of(element: Element) -> str:
    """Inverse of resolve_path for elements inside a parsed document."""
    steps: list[str] = []
    node = element
    while node.parent is not None:
        siblings = [c for c in node.parent.child_elements() if c.tag == node.tag]
        steps.append(f"{node.tag}[{siblings.index(node) + 1}]")
        node = node.parent
    steps.reverse()
    # Drop the leading html step: resolve_path re-anchors beneath the root.
    if len(steps) > 1 and steps[0] == "html[1]":
        steps = steps[1:]
    return "/".join(steps)
