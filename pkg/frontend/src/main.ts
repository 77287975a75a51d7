/**
 * App shell: hash routing, per-run data caching, and composition of the
 * dashboard / gallery / viewer / annotation / remediation panels.
 */

import { ApiClient, ApiError } from './api.js';
import { clear, el, errorBanner } from './dom.js';
import { formatTimestamp } from './format.js';
import { buildHash, parseHash, ViewState } from './state.js';
import {
    AnnotationJson,
    Category,
    DetectionJson,
    ExplanationEntry,
    ImagesPage,
    ManifestRecord,
    RunSummary,
    Stats,
} from './types.js';
import { AnnotationPanel } from './views/annotate.js';
import { renderComparison } from './views/compare.js';
import { DashboardView } from './views/dashboard.js';
import { GalleryView } from './views/gallery.js';
import { ExplanationViewer } from './views/viewer.js';
import { RemediationPanel } from './views/remediate.js';

interface RunCache {
    stats?: Stats;
    manifest?: Map<string, ManifestRecord>;
    predictions?: Map<string, DetectionJson[]>;
    explanations: Map<string, ExplanationEntry[]>;
    annotations?: AnnotationJson[];
    pages: Map<string, ImagesPage>;
}

interface RunPanels {
    runId: string;
    dashboardEl: HTMLElement;
    galleryEl: HTMLElement;
    viewerEl: HTMLElement;
    annotateEl: HTMLElement;
    remediateEl: HTMLElement;
    dashboard: DashboardView;
    gallery: GalleryView;
    viewer: ExplanationViewer;
    annotate: AnnotationPanel;
    viewerImage: string | null;
    renderedCategory: Category | null | undefined;
}

export class App {
    private state: ViewState = { view: 'runs' };
    private caches = new Map<string, RunCache>();
    private panels: RunPanels | null = null;
    private generation = 0;

    constructor(
        private root: HTMLElement,
        private api: ApiClient,
    ) {
        window.addEventListener('hashchange', () => {
            this.state = parseHash(location.hash);
            void this.render();
        });
    }

    start(): void {
        this.state = parseHash(location.hash);
        void this.render();
    }

    navigate(state: ViewState): void {
        const hash = buildHash(state);
        if (location.hash === hash) return;
        location.hash = hash; // hashchange listener re-renders
    }

    private cacheFor(runId: string): RunCache {
        let cache = this.caches.get(runId);
        if (!cache) {
            cache = { explanations: new Map(), pages: new Map() };
            this.caches.set(runId, cache);
        }
        return cache;
    }

    private async render(): Promise<void> {
        const generation = ++this.generation;
        try {
            if (this.state.view === 'runs') {
                this.panels = null;
                await this.renderRunsIndex(generation);
            } else if (this.state.view === 'run' && this.state.runId) {
                await this.renderRunView(generation);
            } else if (this.state.view === 'compare') {
                this.panels = null;
                await this.renderCompareView(generation);
            }
        } catch (err) {
            if (generation !== this.generation) return;
            clear(this.root);
            this.root.append(errorBanner(err instanceof Error ? err.message : String(err)));
        }
    }

    // --- runs index -------------------------------------------------------

    private async renderRunsIndex(generation: number): Promise<void> {
        const runs = await this.api.listRuns();
        if (generation !== this.generation) return;
        clear(this.root);

        const table = el('table', { class: 'runs-table' });
        table.append(
            el('thead', {},
                el('tr', {},
                    el('th', {}, 'Run'),
                    el('th', {}, 'Status'),
                    el('th', {}, 'Created'),
                    el('th', {}, 'Parent'),
                ),
            ),
        );
        const body = el('tbody', {});
        for (const run of runs) {
            body.append(this.runRow(run));
        }
        table.append(body);
        this.root.append(
            el('h2', {}, 'Runs'),
            runs.length === 0 ? el('div', { class: 'muted' }, 'No runs yet.') : table,
        );
    }

    private runRow(run: RunSummary): HTMLElement {
        const link = el('a', { href: buildHash({ view: 'run', runId: run.run_id }) }, run.run_id);
        const status = el('span', { class: `status status-${run.status}` }, run.status);
        if (run.error) status.title = run.error;
        return el('tr', {},
            el('td', {}, link),
            el('td', {}, status),
            el('td', {}, formatTimestamp(run.created_at)),
            el('td', {},
                run.parent_run_id
                    ? el('a', { href: buildHash({ view: 'run', runId: run.parent_run_id }) }, run.parent_run_id)
                    : el('span', { class: 'muted' }, '—'),
            ),
        );
    }

    // --- run view ---------------------------------------------------------

    private buildRunSkeleton(runId: string): RunPanels {
        clear(this.root);
        const dashboardEl = el('section', { class: 'panel' });
        const galleryEl = el('section', { class: 'panel' });
        const viewerEl = el('section', { class: 'panel' });
        const annotateEl = el('section', { class: 'panel' });
        const remediateEl = el('section', { class: 'panel' });
        const headerEl = el('div', { class: 'run-header' });

        this.root.append(
            headerEl,
            el('div', { class: 'run-layout' },
                el('div', { class: 'run-left' }, dashboardEl, galleryEl, remediateEl),
                el('div', { class: 'run-right' }, viewerEl, annotateEl),
            ),
        );

        const panels: RunPanels = {
            runId,
            dashboardEl,
            galleryEl,
            viewerEl,
            annotateEl,
            remediateEl,
            dashboard: new DashboardView(dashboardEl, (category) => {
                this.navigate({ ...this.state, category: category ?? undefined });
            }),
            gallery: new GalleryView(galleryEl, this.api, (imageId) => {
                this.navigate({ ...this.state, imageId, box: undefined });
            }),
            viewer: new ExplanationViewer(viewerEl, this.api, (token) => {
                this.navigate({ ...this.state, box: token ?? undefined });
            }),
            annotate: new AnnotationPanel(annotateEl, this.api),
            viewerImage: null,
            renderedCategory: undefined,
        };

        // Header and remediation panel are per-run, not per-selection.
        void (async () => {
            try {
                const record = await this.api.getRun(runId);
                headerEl.append(
                    el('a', { href: '#/', class: 'crumb' }, '← runs'),
                    el('h2', {}, record.run_id),
                    el('span', { class: `status status-${record.status}` }, record.status),
                );
                if (record.parent_run_id) {
                    headerEl.append(
                        el('span', { class: 'muted' }, 'child of ',
                            el('a', { href: buildHash({ view: 'run', runId: record.parent_run_id }) },
                                record.parent_run_id)),
                    );
                }
                if (record.error) headerEl.append(errorBanner(record.error));
                const remediation = new RemediationPanel(remediateEl, this.api, (base, target) => {
                    this.navigate({ view: 'compare', compareBase: base, compareTarget: target });
                });
                remediation.render(runId, await this.api.getRemediations(runId));
            } catch (err) {
                clear(headerEl);
                headerEl.append(
                    el('a', { href: '#/', class: 'crumb' }, '← runs'),
                    errorBanner(
                        err instanceof ApiError
                            ? `run ${runId}: ${err.message}`
                            : String(err),
                    ),
                );
            }
        })();

        return panels;
    }

    private async renderRunView(generation: number): Promise<void> {
        const runId = this.state.runId!;
        if (!this.panels || this.panels.runId !== runId) {
            this.panels = this.buildRunSkeleton(runId);
        }
        const panels = this.panels;
        const cache = this.cacheFor(runId);
        const category = this.state.category ?? null;

        // Dashboard: never show stale numbers — banner on failure.
        try {
            if (!cache.stats) cache.stats = await this.api.getStats(runId);
            if (generation !== this.generation) return;
            panels.dashboard.render(cache.stats, category);
        } catch (err) {
            if (generation !== this.generation) return;
            clear(panels.dashboardEl);
            panels.dashboardEl.append(
                errorBanner(
                    err instanceof ApiError
                        ? `stats for run ${runId}: ${err.message}`
                        : String(err),
                ),
            );
        }

        // Gallery page (reset to page 1 when the filter changes).
        if (panels.renderedCategory !== category) {
            panels.gallery.resetPage();
            panels.renderedCategory = category;
        }
        panels.gallery.onPageChange = (page) => void this.loadGalleryPage(runId, category, page);
        await this.loadGalleryPage(runId, category, panels.gallery.currentPage(), generation);

        // Viewer + annotations for the selected image.
        await this.renderSelection(runId, generation);
    }

    private async loadGalleryPage(
        runId: string,
        category: Category | null,
        page: number,
        generation?: number,
    ): Promise<void> {
        if (!this.panels || this.panels.runId !== runId) return;
        const cache = this.cacheFor(runId);
        const key = `${category ?? ''}|${page}`;
        try {
            let pageData = cache.pages.get(key);
            if (!pageData) {
                pageData = await this.api.getImages(runId, category, page);
                cache.pages.set(key, pageData);
            }
            if (generation !== undefined && generation !== this.generation) return;
            this.panels.gallery.render(runId, pageData, this.state.imageId ?? null);
        } catch (err) {
            clear(this.panels.galleryEl);
            this.panels.galleryEl.append(
                errorBanner(err instanceof Error ? err.message : String(err)),
            );
        }
    }

    private async renderSelection(runId: string, generation: number): Promise<void> {
        const panels = this.panels!;
        const cache = this.cacheFor(runId);
        const imageId = this.state.imageId ?? null;
        const token = this.state.box ?? null;

        if (!imageId) {
            panels.viewerImage = null;
            clear(panels.viewerEl);
            panels.viewerEl.append(
                el('div', { class: 'muted viewer-placeholder' }, 'Select an image to inspect it.'),
            );
            if (!cache.annotations) cache.annotations = await this.api.getAnnotations(runId);
            if (generation !== this.generation) return;
            panels.annotate.render(runId, null, cache.annotations);
            return;
        }

        // Same image: just move the selection, keep toggles and opacity.
        if (panels.viewerImage === imageId) {
            panels.viewer.setSelected(token);
        } else {
            try {
                if (!cache.manifest) {
                    const records = await this.api.getManifest(runId);
                    cache.manifest = new Map(records.map((r) => [r.id, r]));
                }
                if (!cache.predictions) {
                    cache.predictions = await this.api.getPredictions(runId);
                }
                let explanations = cache.explanations.get(imageId);
                if (!explanations) {
                    explanations = await this.api.getExplanations(runId, imageId);
                    cache.explanations.set(imageId, explanations);
                }
                if (generation !== this.generation) return;
                const record = cache.manifest.get(imageId);
                if (!record) throw new Error(`image ${imageId} is not part of run ${runId}`);
                panels.viewer.render(
                    runId,
                    record,
                    cache.predictions.get(imageId) ?? [],
                    explanations,
                    token,
                );
                panels.viewerImage = imageId;
            } catch (err) {
                if (generation !== this.generation) return;
                panels.viewerImage = null;
                clear(panels.viewerEl);
                panels.viewerEl.append(
                    errorBanner(err instanceof Error ? err.message : String(err)),
                );
            }
        }

        if (!cache.annotations) cache.annotations = await this.api.getAnnotations(runId);
        if (generation !== this.generation) return;
        panels.annotate.render(runId, imageId, cache.annotations);
    }

    // --- compare view -----------------------------------------------------

    private async renderCompareView(generation: number): Promise<void> {
        const base = this.state.compareBase!;
        const target = this.state.compareTarget!;
        try {
            const comparison = await this.api.compare(base, target);
            if (generation !== this.generation) return;
            clear(this.root);
            this.root.append(
                el('div', { class: 'run-header' },
                    el('a', { href: '#/', class: 'crumb' }, '← runs'),
                    el('h2', {}, 'Comparison'),
                ),
                el('div', { class: 'compare-ids' },
                    el('a', { href: buildHash({ view: 'run', runId: base }) }, base),
                    el('span', { class: 'muted' }, ' vs '),
                    el('a', { href: buildHash({ view: 'run', runId: target }) }, target),
                ),
                renderComparison(comparison),
            );
        } catch (err) {
            if (generation !== this.generation) return;
            clear(this.root);
            this.root.append(
                el('a', { href: '#/', class: 'crumb' }, '← runs'),
                errorBanner(
                    err instanceof ApiError
                        ? `compare ${base} vs ${target}: ${err.message}`
                        : String(err),
                ),
            );
        }
    }
}

// Browser bootstrap (absent under test).
const rootEl = typeof document !== 'undefined' ? document.getElementById('app') : null;
if (rootEl) {
    const app = new App(rootEl, new ApiClient(''));
    app.start();
}
