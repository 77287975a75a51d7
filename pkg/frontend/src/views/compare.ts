/**
 * Side-by-side comparison of two runs: the four category rows with their
 * improvement direction, deltas, the better side in bold, and the list of
 * per-image category transitions.
 */

import { el } from '../dom.js';
import { CATEGORY_LABELS, directionArrow, formatDelta } from '../format.js';
import { ComparisonJson } from '../types.js';

export function renderComparison(comparison: ComparisonJson): HTMLElement {
    const table = el('table', { class: 'comparison-table' });
    table.append(
        el(
            'thead',
            {},
            el(
                'tr',
                {},
                el('th', {}, 'Category'),
                el('th', {}, ''),
                el('th', { class: 'num' }, 'Base'),
                el('th', { class: 'num' }, 'Target'),
                el('th', { class: 'num' }, 'Δ'),
            ),
        ),
    );
    const body = el('tbody', {});
    for (const row of comparison.table.rows) {
        const baseCell = el('td', { class: 'num' }, String(row.base));
        const targetCell = el('td', { class: 'num' }, String(row.target));
        if (row.better === 'base') baseCell.classList.add('better');
        if (row.better === 'target') targetCell.classList.add('better');
        body.append(
            el(
                'tr',
                {},
                el('td', {}, CATEGORY_LABELS[row.category]),
                el('td', { class: 'arrow', title: row.higher_is_better ? 'higher is better' : 'lower is better' },
                    directionArrow(row.higher_is_better)),
                baseCell,
                targetCell,
                el('td', { class: 'num delta' }, formatDelta(row.delta)),
            ),
        );
    }
    body.append(
        el(
            'tr',
            { class: 'total-row' },
            el('td', {}, 'Total images'),
            el('td', {}),
            el('td', { class: 'num' }, String(comparison.table.total)),
            el('td', { class: 'num' }, String(comparison.table.total)),
            el('td', {}),
        ),
    );
    table.append(body);

    const transitions = el('div', { class: 'transitions' });
    if (comparison.transitions.length === 0) {
        transitions.append(el('div', { class: 'muted' }, 'No image changed category.'));
    } else {
        transitions.append(el('h4', {}, `${comparison.transitions.length} image(s) changed category`));
        for (const t of comparison.transitions) {
            transitions.append(
                el(
                    'div',
                    { class: 'transition-row' },
                    el('span', { class: 'annotation-image' }, t.id),
                    el(
                        'span',
                        {},
                        ` ${CATEGORY_LABELS[t.base_category]} → ${CATEGORY_LABELS[t.target_category]}`,
                    ),
                ),
            );
        }
    }

    return el('div', { class: 'comparison' }, table, transitions);
}
