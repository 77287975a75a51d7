/**
 * Category breakdown as clickable bars. Counts and percentages are shown
 * exactly as /stats returned them; bar widths are proportional to counts.
 * Clicking a bar toggles that category as the gallery filter.
 */

import { clear, el } from '../dom.js';
import { CATEGORY_COLORS, CATEGORY_LABELS, formatPercent } from '../format.js';
import { Category, CATEGORY_ORDER, Stats } from '../types.js';

export class DashboardView {
    constructor(
        private container: HTMLElement,
        private onCategory: (category: Category | null) => void,
    ) {}

    render(stats: Stats, active: Category | null): void {
        clear(this.container);
        const maxCount = Math.max(1, ...CATEGORY_ORDER.map((c) => stats.counts[c] ?? 0));

        const list = el('div', { class: 'dashboard-bars' });
        for (const category of CATEGORY_ORDER) {
            const count = stats.counts[category] ?? 0;
            const percent = stats.percentages[category] ?? 0;
            const isActive = active === category;

            const bar = el('div', { class: 'bar-track' });
            const fill = el('div', { class: 'bar-fill' });
            fill.style.width = `${(count / maxCount) * 100}%`;
            fill.style.background = CATEGORY_COLORS[category];
            bar.append(fill);

            const row = el(
                'button',
                {
                    class: 'bar-row' + (isActive ? ' bar-row-active' : ''),
                    'data-category': category,
                    title: `filter by ${CATEGORY_LABELS[category]}`,
                },
                el('span', { class: 'bar-label' }, CATEGORY_LABELS[category]),
                bar,
                el(
                    'span',
                    { class: 'bar-value' },
                    `${count}`,
                    el('span', { class: 'bar-percent' }, ` ${formatPercent(percent)}`),
                ),
            );
            row.addEventListener('click', () => {
                this.onCategory(isActive ? null : category);
            });
            list.append(row);
        }

        this.container.append(
            el('div', { class: 'dashboard-total' }, `${stats.total} images`),
            list,
        );
    }
}
