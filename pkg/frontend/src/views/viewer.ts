/**
 * Explanation viewer: the image with its ground-truth and predicted boxes,
 * plus the saliency overlay for the selected box.
 *
 * Ground-truth boxes render in one color, predictions in another; both
 * layers toggle on and off without touching the network (the box geometry
 * is already in memory). Selecting a box swaps the pre-rendered overlay
 * PNG in via its artifact URL; the opacity slider blends it over the
 * original, so 0 shows the unmodified image.
 */

import { ApiClient } from '../api.js';
import { clear, el } from '../dom.js';
import { BoxCoords, DetectionJson, ExplanationEntry, ManifestRecord } from '../types.js';
import { BoxItem, ViewerModel } from '../viewer-model.js';

const GT_COLOR = '#22d3ee';
const PRED_COLOR = '#fb923c';

export class ExplanationViewer {
    private model: ViewerModel | null = null;
    private runId = '';
    private record: ManifestRecord | null = null;
    // Sticky across image switches within a run view.
    private opacity = 0.6;
    private showGtPref = true;
    private showPredPref = true;

    private boxLayer: HTMLElement | null = null;
    private overlayImg: HTMLImageElement | null = null;
    private chipRow: HTMLElement | null = null;
    private noticeArea: HTMLElement | null = null;

    constructor(
        private container: HTMLElement,
        private api: ApiClient,
        private onSelect: (token: string | null) => void,
    ) {}

    render(
        runId: string,
        record: ManifestRecord,
        detections: DetectionJson[],
        explanations: ExplanationEntry[],
        selectedToken: string | null,
    ): void {
        this.runId = runId;
        this.record = record;
        this.model = new ViewerModel(record, detections, explanations);
        this.model.showGt = this.showGtPref;
        this.model.showPred = this.showPredPref;
        this.model.select(selectedToken);
        this.rebuild();
    }

    /** Move the selection without rebuilding the stage. */
    setSelected(token: string | null): void {
        if (!this.model) return;
        this.model.select(token);
        this.refreshBoxes();
        this.refreshOverlay();
        this.refreshChips();
    }

    private rebuild(): void {
        clear(this.container);
        if (!this.model || !this.record) return;

        const stage = el('div', { class: 'viewer-stage' });
        stage.style.aspectRatio = `${this.record.width} / ${this.record.height}`;

        stage.append(
            el('img', {
                class: 'viewer-image',
                src: this.api.imageFileUrl(this.runId, this.record.id),
                alt: this.record.id,
            }),
        );

        this.overlayImg = el('img', { class: 'viewer-overlay', alt: '' });
        stage.append(this.overlayImg);

        this.boxLayer = el('div', { class: 'viewer-boxes' });
        stage.append(this.boxLayer);

        const gtToggle = this.makeToggle('ground truth', this.model.showGt, (on) => {
            this.showGtPref = on;
            if (this.model) this.model.showGt = on;
            this.refreshBoxes();
            this.refreshChips();
        });
        gtToggle.style.setProperty('--swatch', GT_COLOR);
        const predToggle = this.makeToggle('predictions', this.model.showPred, (on) => {
            this.showPredPref = on;
            if (this.model) this.model.showPred = on;
            this.refreshBoxes();
            this.refreshChips();
        });
        predToggle.style.setProperty('--swatch', PRED_COLOR);

        const slider = el('input', {
            type: 'range',
            min: '0',
            max: '100',
            value: String(Math.round(this.opacity * 100)),
            class: 'opacity-slider',
        }) as HTMLInputElement;
        slider.addEventListener('input', () => {
            this.opacity = Number(slider.value) / 100;
            this.refreshOverlay();
        });

        this.chipRow = el('div', { class: 'chip-row' });
        this.noticeArea = el('div', { class: 'viewer-notice-area' });

        this.container.append(
            el('div', { class: 'viewer-title' }, this.record.id),
            stage,
            el(
                'div',
                { class: 'viewer-controls' },
                gtToggle,
                predToggle,
                el('span', { class: 'slider-label' }, 'overlay opacity'),
                slider,
            ),
            this.chipRow,
            this.noticeArea,
        );

        this.refreshBoxes();
        this.refreshOverlay();
        this.refreshChips();
    }

    private makeToggle(label: string, initial: boolean, onChange: (on: boolean) => void): HTMLElement {
        const input = el('input', { type: 'checkbox' }) as HTMLInputElement;
        input.checked = initial;
        input.addEventListener('change', () => onChange(input.checked));
        return el('span', { class: 'layer-toggle' }, el('label', {}, input, ` ${label}`));
    }

    private refreshBoxes(): void {
        if (!this.boxLayer || !this.model || !this.record) return;
        clear(this.boxLayer);
        const { width, height } = this.record;
        const selected = this.model.selected();

        for (const box of this.model.ignored) {
            this.boxLayer.append(this.boxDiv(box, width, height, 'box box-ignored', null));
        }
        for (const item of this.model.visibleItems()) {
            const cls =
                'box ' +
                (item.kind === 'gt' ? 'box-gt' : 'box-pred') +
                (selected && selected.token === item.token ? ' box-selected' : '');
            this.boxLayer.append(this.boxDiv(item.box, width, height, cls, item));
        }
    }

    private boxDiv(
        box: BoxCoords,
        width: number,
        height: number,
        cls: string,
        item: BoxItem | null,
    ): HTMLElement {
        const [x1, y1, x2, y2] = box;
        const div = el('div', { class: cls });
        div.style.left = `${(x1 / width) * 100}%`;
        div.style.top = `${(y1 / height) * 100}%`;
        div.style.width = `${((x2 - x1) / width) * 100}%`;
        div.style.height = `${((y2 - y1) / height) * 100}%`;
        if (item) {
            div.title = item.label;
            div.addEventListener('click', () => this.onSelect(item.token));
        }
        return div;
    }

    private refreshOverlay(): void {
        if (!this.overlayImg || !this.model) return;
        const path = this.model.overlayPath();
        if (path === null) {
            this.overlayImg.style.display = 'none';
            this.overlayImg.removeAttribute('src');
        } else {
            const url = this.api.artifactUrl(this.runId, path);
            if (this.overlayImg.getAttribute('src') !== url) {
                this.overlayImg.src = url;
            }
            this.overlayImg.style.display = 'block';
            this.overlayImg.style.opacity = String(this.opacity);
        }
        this.refreshNotice();
    }

    private refreshNotice(): void {
        if (!this.noticeArea || !this.model) return;
        clear(this.noticeArea);
        const selected = this.model.selected();
        if (!this.model.hasAnyExplanation()) {
            this.noticeArea.append(
                el('div', { class: 'banner banner-notice' }, 'explain not run for this image'),
            );
        } else if (selected && this.model.selectedExplanation() === null) {
            this.noticeArea.append(
                el('div', { class: 'banner banner-notice' }, `explain not run for ${selected.token}`),
            );
        } else if (selected) {
            const entry = this.model.selectedExplanation();
            if (entry && entry.skipped_samples > 0) {
                this.noticeArea.append(
                    el(
                        'div',
                        { class: 'banner banner-notice' },
                        `${entry.skipped_samples} masked samples failed detection` +
                            (entry.flagged ? ' — map flagged as unreliable' : ''),
                    ),
                );
            }
        }
    }

    private refreshChips(): void {
        if (!this.chipRow || !this.model) return;
        clear(this.chipRow);
        const selected = this.model.selected();
        for (const item of this.model.visibleItems()) {
            const chip = el(
                'button',
                {
                    class:
                        'target-chip ' +
                        (item.kind === 'gt' ? 'chip-gt' : 'chip-pred') +
                        (selected && selected.token === item.token ? ' chip-selected' : ''),
                },
                item.label,
            );
            chip.addEventListener('click', () =>
                this.onSelect(selected && selected.token === item.token ? null : item.token),
            );
            this.chipRow.append(chip);
        }
    }
}
