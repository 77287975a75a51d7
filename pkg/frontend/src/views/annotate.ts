/**
 * Hypothesis annotations for the selected image: a tag + note form and the
 * existing annotation list. Posting appends to the list in place.
 */

import { ApiClient, ApiError } from '../api.js';
import { clear, el, errorBanner } from '../dom.js';
import { formatTimestamp } from '../format.js';
import { AnnotationJson, HYPOTHESIS_TAGS } from '../types.js';

export class AnnotationPanel {
    private listEl: HTMLElement | null = null;
    private statusEl: HTMLElement | null = null;

    constructor(
        private container: HTMLElement,
        private api: ApiClient,
    ) {}

    render(runId: string, imageId: string | null, annotations: AnnotationJson[]): void {
        clear(this.container);
        this.container.append(el('h3', {}, 'Annotations'));

        this.listEl = el('div', { class: 'annotation-list' });
        const shown = imageId
            ? annotations.filter((a) => a.image_id === imageId)
            : annotations;
        for (const annotation of shown) {
            this.listEl.append(this.annotationRow(annotation));
        }
        if (shown.length === 0) {
            this.listEl.append(el('div', { class: 'muted' }, 'No annotations yet.'));
        }
        this.container.append(this.listEl);

        if (!imageId) {
            this.container.append(el('div', { class: 'muted' }, 'Select an image to annotate.'));
            return;
        }

        const select = el('select', { class: 'hypothesis-select' }) as HTMLSelectElement;
        for (const tag of HYPOTHESIS_TAGS) {
            select.append(el('option', { value: tag }, tag));
        }
        const note = el('textarea', {
            class: 'note-input',
            rows: '2',
            placeholder: 'what do you think went wrong here?',
        }) as HTMLTextAreaElement;
        const submit = el('button', { class: 'primary-btn' }, 'Add annotation') as HTMLButtonElement;
        this.statusEl = el('div', { class: 'form-status' });

        submit.addEventListener('click', async () => {
            submit.disabled = true;
            try {
                const created = await this.api.postAnnotation(runId, {
                    image_id: imageId,
                    hypothesis: select.value,
                    note: note.value,
                });
                // Newly posted annotations appear immediately, no reload.
                if (this.listEl) {
                    const placeholder = this.listEl.querySelector('.muted');
                    if (placeholder) placeholder.remove();
                    this.listEl.append(this.annotationRow(created));
                }
                note.value = '';
                if (this.statusEl) clear(this.statusEl);
            } catch (err) {
                if (this.statusEl) {
                    clear(this.statusEl);
                    this.statusEl.append(
                        errorBanner(err instanceof ApiError ? err.message : String(err)),
                    );
                }
            } finally {
                submit.disabled = false;
            }
        });

        this.container.append(
            el('div', { class: 'annotation-form' },
                el('label', { class: 'form-label' }, 'hypothesis ', select),
                note,
                submit,
            ),
            this.statusEl,
        );
    }

    private annotationRow(annotation: AnnotationJson): HTMLElement {
        return el(
            'div',
            { class: 'annotation-row' },
            el('span', { class: 'annotation-tag' }, annotation.hypothesis),
            el('span', { class: 'annotation-image' }, annotation.image_id),
            annotation.note ? el('span', { class: 'annotation-note' }, annotation.note) : null,
            el('span', { class: 'annotation-time muted' }, formatTimestamp(annotation.created_at)),
        );
    }
}
