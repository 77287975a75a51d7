/**
 * Paginated image list for a run, optionally filtered by category.
 */

import { ApiClient } from '../api.js';
import { clear, el } from '../dom.js';
import { CATEGORY_COLORS, CATEGORY_LABELS } from '../format.js';
import { Category, ImagesPage } from '../types.js';

export class GalleryView {
    private page = 1;

    constructor(
        private container: HTMLElement,
        private api: ApiClient,
        private onSelect: (imageId: string) => void,
    ) {}

    resetPage(): void {
        this.page = 1;
    }

    render(runId: string, pageData: ImagesPage, selected: string | null): void {
        this.page = pageData.page;
        clear(this.container);

        if (pageData.images.length === 0) {
            this.container.append(
                el('div', { class: 'gallery-empty' }, 'No images in this category.'),
            );
            return;
        }

        const grid = el('div', { class: 'gallery-grid' });
        for (const row of pageData.images) {
            const chip = el('span', { class: 'category-chip' }, CATEGORY_LABELS[row.category]);
            chip.style.background = CATEGORY_COLORS[row.category];
            const card = el(
                'button',
                { class: 'gallery-card' + (row.id === selected ? ' gallery-card-active' : '') },
                el('img', {
                    class: 'gallery-thumb',
                    src: this.api.imageFileUrl(runId, row.id),
                    alt: row.id,
                    loading: 'lazy',
                }),
                el('span', { class: 'gallery-id' }, row.id),
                chip,
            );
            card.addEventListener('click', () => this.onSelect(row.id));
            grid.append(card);
        }
        this.container.append(grid);

        if (pageData.pages > 1) {
            const prev = el('button', { class: 'pager-btn' }, '← prev') as HTMLButtonElement;
            const next = el('button', { class: 'pager-btn' }, 'next →') as HTMLButtonElement;
            prev.disabled = pageData.page <= 1;
            next.disabled = pageData.page >= pageData.pages;
            prev.addEventListener('click', () => this.turnTo(pageData.page - 1));
            next.addEventListener('click', () => this.turnTo(pageData.page + 1));
            this.container.append(
                el(
                    'div',
                    { class: 'pager' },
                    prev,
                    el('span', {}, `page ${pageData.page} of ${pageData.pages}`),
                    next,
                ),
            );
        }
    }

    onPageChange: (page: number) => void = () => {};

    private turnTo(page: number): void {
        this.page = page;
        this.onPageChange(page);
    }

    currentPage(): number {
        return this.page;
    }
}
