import type { Span } from './api.js';

/**
 * Turn a text field plus its entity spans into DOM nodes where each mention
 * becomes a hyperlink: personas render blue, locations green. Spans are
 * half-open [start, end) offsets into the raw text.
 */
export function annotateText(doc: Document, text: string, spans: Span[], field: string): DocumentFragment {
  const fragment = doc.createDocumentFragment();
  const relevant = spans
    .filter((s) => s.field === field)
    .sort((a, b) => a.start - b.start);
  let cursor = 0;
  for (const span of relevant) {
    if (span.start > cursor) {
      fragment.appendChild(doc.createTextNode(text.slice(cursor, span.start)));
    }
    const link = doc.createElement('a');
    link.className = `entity-link ${span.kind}`;
    link.style.color = span.kind === 'persona' ? 'blue' : 'green';
    link.href = `#/${span.kind}/${span.entity_id}`;
    link.dataset.entityId = span.entity_id;
    link.textContent = text.slice(span.start, span.end);
    fragment.appendChild(link);
    cursor = span.end;
  }
  if (cursor < text.length) {
    fragment.appendChild(doc.createTextNode(text.slice(cursor)));
  }
  return fragment;
}
