/**
 * Remediation submission flow: build the payload, post it, poll the child
 * run until it settles, then fetch the parent/child comparison.
 *
 * The flow is a small state machine with injected I/O so it can be tested
 * without a server or timers.
 */

import { ApiError } from './api.js';
import { ComparisonJson, RemediationStarted, RunRecord } from './types.js';

export interface PadFields {
    top: number;
    left: number;
    right: number;
    bottom: number;
}

export type RemediationPayload =
    | { action: 'relabel'; note?: string }
    | { action: 'pad'; padding: [number, number, number, number]; note?: string };

/**
 * Build the POST body. Pad amounts are echoed exactly as entered, in
 * [top, left, right, bottom] order — the same order the server stores.
 */
export function buildRemediationPayload(
    action: 'relabel' | 'pad',
    pad: PadFields | null,
    note: string,
): RemediationPayload {
    if (action === 'relabel') {
        return note ? { action, note } : { action };
    }
    if (!pad) {
        throw new Error('pad remediation needs all four pixel amounts');
    }
    const padding: [number, number, number, number] = [pad.top, pad.left, pad.right, pad.bottom];
    for (const value of padding) {
        if (!Number.isInteger(value) || value < 0) {
            throw new Error('pad amounts must be non-negative integers');
        }
    }
    return note ? { action, padding, note } : { action, padding };
}

export type FlowState =
    | { phase: 'idle' }
    | { phase: 'submitting' }
    | { phase: 'polling'; childRunId: string }
    | { phase: 'done'; childRunId: string; comparison: ComparisonJson }
    | { phase: 'child-failed'; childRunId: string; error: string }
    | { phase: 'conflict'; message: string }
    | { phase: 'error'; message: string };

export interface FlowDeps {
    postRemediation(runId: string, payload: unknown): Promise<RemediationStarted>;
    getRun(runId: string): Promise<RunRecord>;
    compare(baseId: string, targetId: string): Promise<ComparisonJson>;
    /** Wait between polls; injected so tests can run without real timers. */
    sleep(ms: number): Promise<void>;
    pollIntervalMs?: number;
}

export class RemediationFlow {
    state: FlowState = { phase: 'idle' };

    constructor(
        private deps: FlowDeps,
        private onChange: (state: FlowState) => void = () => {},
    ) {}

    /** Whether the submit control should be disabled right now. */
    submitDisabled(): boolean {
        return (
            this.state.phase === 'submitting' ||
            this.state.phase === 'polling' ||
            this.state.phase === 'conflict'
        );
    }

    private setState(state: FlowState): void {
        this.state = state;
        this.onChange(state);
    }

    /** Allow a new submission after a conflict or error has been acknowledged. */
    reset(): void {
        this.setState({ phase: 'idle' });
    }

    async submit(parentRunId: string, payload: RemediationPayload): Promise<FlowState> {
        this.setState({ phase: 'submitting' });
        let started: RemediationStarted;
        try {
            started = await this.deps.postRemediation(parentRunId, payload);
        } catch (err) {
            if (err instanceof ApiError && (err.code === 'conflict' || err.code === 'run_in_progress')) {
                this.setState({ phase: 'conflict', message: err.message });
            } else {
                this.setState({ phase: 'error', message: err instanceof Error ? err.message : String(err) });
            }
            return this.state;
        }

        const childId = started.child_run_id;
        this.setState({ phase: 'polling', childRunId: childId });
        const interval = this.deps.pollIntervalMs ?? 1000;
        for (;;) {
            let child: RunRecord;
            try {
                child = await this.deps.getRun(childId);
            } catch (err) {
                this.setState({ phase: 'error', message: err instanceof Error ? err.message : String(err) });
                return this.state;
            }
            if (child.status === 'completed') {
                break;
            }
            if (child.status === 'failed') {
                this.setState({
                    phase: 'child-failed',
                    childRunId: childId,
                    error: child.error ?? 'run failed',
                });
                return this.state;
            }
            await this.deps.sleep(interval);
        }

        try {
            const comparison = await this.deps.compare(parentRunId, childId);
            this.setState({ phase: 'done', childRunId: childId, comparison });
        } catch (err) {
            this.setState({ phase: 'error', message: err instanceof Error ? err.message : String(err) });
        }
        return this.state;
    }
}
