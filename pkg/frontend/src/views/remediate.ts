/**
 * Remediation launcher. Remediations rewrite data and spawn child runs, so
 * the form always goes through an explicit confirm step; while a child is
 * in flight (ours or anyone else's) submission stays disabled with an
 * explanation. On completion the panel hands the comparison off to the app.
 */

import { ApiClient } from '../api.js';
import { clear, el, errorBanner, notice } from '../dom.js';
import {
    buildRemediationPayload,
    FlowState,
    PadFields,
    RemediationFlow,
    RemediationPayload,
} from '../remediation.js';
import { RemediationsIndex } from '../types.js';

export class RemediationPanel {
    private flow: RemediationFlow;
    private statusEl: HTMLElement | null = null;
    private confirmEl: HTMLElement | null = null;
    private submitBtn: HTMLButtonElement | null = null;
    private pending: RemediationPayload | null = null;

    constructor(
        private container: HTMLElement,
        api: ApiClient,
        private onComparison: (baseId: string, targetId: string) => void,
    ) {
        this.flow = new RemediationFlow(
            {
                postRemediation: (runId, payload) => api.postRemediation(runId, payload),
                getRun: (runId) => api.getRun(runId),
                compare: (base, target) => api.compare(base, target),
                sleep: (ms) => new Promise((resolve) => setTimeout(resolve, ms)),
                pollIntervalMs: 1500,
            },
            (state) => this.onFlowChange(state),
        );
    }

    render(runId: string, index: RemediationsIndex): void {
        clear(this.container);
        this.container.append(el('h3', {}, 'Remediation'));

        for (const plan of index.remediations) {
            this.container.append(
                el(
                    'div',
                    { class: 'remediation-row' },
                    el('span', { class: 'annotation-tag' }, plan.action),
                    plan.padding ? el('span', {}, `[${plan.padding.join(', ')}]`) : null,
                    el('span', { class: 'muted' }, plan.status),
                    plan.child_run_id ? el('span', { class: 'muted' }, `child ${plan.child_run_id}`) : null,
                ),
            );
        }

        const relabelRadio = this.radio('action', 'relabel', true);
        const padRadio = this.radio('action', 'pad', false);

        const padInputs: Record<keyof PadFields, HTMLInputElement> = {
            top: this.numberInput('top'),
            left: this.numberInput('left'),
            right: this.numberInput('right'),
            bottom: this.numberInput('bottom'),
        };
        const padRow = el(
            'div',
            { class: 'pad-row' },
            el('label', {}, 'top ', padInputs.top),
            el('label', {}, 'left ', padInputs.left),
            el('label', {}, 'right ', padInputs.right),
            el('label', {}, 'bottom ', padInputs.bottom),
        );
        padRow.style.display = 'none';
        relabelRadio.input.addEventListener('change', () => (padRow.style.display = 'none'));
        padRadio.input.addEventListener('change', () => (padRow.style.display = 'flex'));

        const noteInput = el('input', {
            type: 'text',
            class: 'note-input',
            placeholder: 'note (optional)',
        }) as HTMLInputElement;

        this.submitBtn = el('button', { class: 'primary-btn' }, 'Remediate…') as HTMLButtonElement;
        this.confirmEl = el('div', { class: 'confirm-area' });
        this.statusEl = el('div', { class: 'form-status' });

        this.submitBtn.addEventListener('click', () => {
            const action = padRadio.input.checked ? 'pad' : 'relabel';
            let payload: RemediationPayload;
            try {
                const pad: PadFields | null =
                    action === 'pad'
                        ? {
                              top: Number(padInputs.top.value),
                              left: Number(padInputs.left.value),
                              right: Number(padInputs.right.value),
                              bottom: Number(padInputs.bottom.value),
                          }
                        : null;
                payload = buildRemediationPayload(action, pad, noteInput.value);
            } catch (err) {
                this.showStatus(errorBanner(err instanceof Error ? err.message : String(err)));
                return;
            }
            this.askConfirm(runId, payload);
        });

        this.container.append(
            el('div', { class: 'remediation-form' },
                el('div', { class: 'radio-row' }, relabelRadio.wrapper, padRadio.wrapper),
                padRow,
                noteInput,
                this.submitBtn,
            ),
            this.confirmEl,
            this.statusEl,
        );

        if (index.in_flight) {
            this.submitBtn.disabled = true;
            this.showStatus(
                notice(
                    `remediation child ${index.in_flight} is already in flight for this run; ` +
                        'wait for it to finish before launching another',
                ),
            );
        }
    }

    /** Show the payload and require an explicit confirmation before posting. */
    private askConfirm(runId: string, payload: RemediationPayload): void {
        if (!this.confirmEl) return;
        clear(this.confirmEl);
        this.pending = payload;

        const summary =
            payload.action === 'pad'
                ? `pad [${payload.padding.join(', ')}] (top, left, right, bottom)`
                : 'relabel: clamp all out-of-frame boxes';
        const confirm = el('button', { class: 'danger-btn' }, 'Confirm') as HTMLButtonElement;
        const cancel = el('button', { class: 'plain-btn' }, 'Cancel') as HTMLButtonElement;
        confirm.addEventListener('click', () => {
            if (this.confirmEl) clear(this.confirmEl);
            if (this.pending) void this.flow.submit(runId, this.pending);
        });
        cancel.addEventListener('click', () => {
            this.pending = null;
            if (this.confirmEl) clear(this.confirmEl);
        });

        this.confirmEl.append(
            el(
                'div',
                { class: 'confirm-box' },
                el('div', {}, `This will rewrite the run's manifest and start a child run: ${summary}`),
                el('div', { class: 'confirm-actions' }, confirm, cancel),
            ),
        );
    }

    private onFlowChange(state: FlowState): void {
        if (this.submitBtn) this.submitBtn.disabled = this.flow.submitDisabled();
        switch (state.phase) {
            case 'idle':
                if (this.statusEl) clear(this.statusEl);
                break;
            case 'submitting':
                this.showStatus(notice('submitting remediation…'));
                break;
            case 'polling':
                this.showStatus(notice(`child run ${state.childRunId} executing…`));
                break;
            case 'conflict': {
                const dismiss = el('button', { class: 'plain-btn' }, 'dismiss') as HTMLButtonElement;
                dismiss.addEventListener('click', () => this.flow.reset());
                this.showStatus(notice(`cannot submit: ${state.message} `), dismiss);
                break;
            }
            case 'child-failed':
                this.showStatus(
                    errorBanner(`child run ${state.childRunId} failed: ${state.error}`),
                );
                break;
            case 'error':
                this.showStatus(errorBanner(state.message));
                break;
            case 'done':
                this.showStatus(notice(`child run ${state.childRunId} completed`));
                this.onComparison(state.comparison.base_run_id, state.comparison.target_run_id);
                break;
        }
    }

    private showStatus(...nodes: HTMLElement[]): void {
        if (!this.statusEl) return;
        clear(this.statusEl);
        this.statusEl.append(...nodes);
    }

    private radio(name: string, value: string, checked: boolean) {
        const input = el('input', { type: 'radio', name, value }) as HTMLInputElement;
        input.checked = checked;
        const wrapper = el('label', { class: 'radio-label' }, input, ` ${value}`);
        return { input, wrapper };
    }

    private numberInput(name: string): HTMLInputElement {
        return el('input', {
            type: 'number',
            min: '0',
            step: '1',
            value: '0',
            class: 'pad-input',
            'data-pad': name,
        }) as HTMLInputElement;
    }
}
