/**
 * Typed client for the detlens service. All state the UI shows comes
 * through this module; there is no other data source.
 */

import {
    AnnotationJson,
    AuditJson,
    Category,
    ComparisonJson,
    DetectionJson,
    ExplanationEntry,
    ImagesPage,
    ManifestRecord,
    PredictionLine,
    RemediationsIndex,
    RemediationStarted,
    RunRecord,
    RunSummary,
    Stats,
} from './types.js';

export class ApiError extends Error {
    constructor(
        public status: number,
        public code: string,
        message: string,
    ) {
        super(message);
        this.name = 'ApiError';
    }
}

/** Parse newline-delimited JSON (the service's .jsonl artifacts). */
export function parseJsonl<T>(text: string): T[] {
    const out: T[] = [];
    for (const line of text.split('\n')) {
        const trimmed = line.trim();
        if (trimmed.length > 0) {
            out.push(JSON.parse(trimmed) as T);
        }
    }
    return out;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
    private fetchFn: FetchLike;

    constructor(
        private baseUrl: string = '',
        fetchFn?: FetchLike,
    ) {
        this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
    }

    // --- low level ----------------------------------------------------

    private async request(path: string, init?: RequestInit): Promise<Response> {
        const response = await this.fetchFn(this.baseUrl + path, init);
        if (!response.ok) {
            let code = 'http_error';
            let message = `${response.status} on ${path}`;
            try {
                const body = await response.json();
                if (body && body.error) {
                    code = body.error.code ?? code;
                    message = body.error.message ?? message;
                }
            } catch {
                // non-JSON error body; keep the generic message
            }
            throw new ApiError(response.status, code, message);
        }
        return response;
    }

    private async getJson<T>(path: string): Promise<T> {
        const response = await this.request(path);
        return (await response.json()) as T;
    }

    private async postJson<T>(path: string, payload: unknown): Promise<T> {
        const response = await this.request(path, {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify(payload),
        });
        return (await response.json()) as T;
    }

    // --- runs -----------------------------------------------------------

    async listRuns(): Promise<RunSummary[]> {
        const body = await this.getJson<{ runs: RunSummary[] }>('/api/runs');
        return body.runs;
    }

    getRun(runId: string): Promise<RunRecord> {
        return this.getJson(`/api/runs/${encodeURIComponent(runId)}`);
    }

    getStats(runId: string): Promise<Stats> {
        return this.getJson(`/api/runs/${encodeURIComponent(runId)}/stats`);
    }

    getImages(runId: string, category?: Category | null, page = 1): Promise<ImagesPage> {
        const params = new URLSearchParams();
        if (category) params.set('category', category);
        if (page !== 1) params.set('page', String(page));
        const query = params.toString();
        return this.getJson(
            `/api/runs/${encodeURIComponent(runId)}/images${query ? '?' + query : ''}`,
        );
    }

    async getExplanations(runId: string, imageId: string): Promise<ExplanationEntry[]> {
        const body = await this.getJson<{ explanations: ExplanationEntry[] }>(
            `/api/runs/${encodeURIComponent(runId)}/images/${encodeURIComponent(imageId)}/explanations`,
        );
        return body.explanations;
    }

    getAudit(runId: string): Promise<AuditJson> {
        return this.getJson(`/api/runs/${encodeURIComponent(runId)}/audit`);
    }

    // --- artifact files ---------------------------------------------------

    imageFileUrl(runId: string, imageId: string): string {
        return (
            this.baseUrl +
            `/api/runs/${encodeURIComponent(runId)}/images/${encodeURIComponent(imageId)}/file`
        );
    }

    /** URL for a run-relative artifact path such as "explanations/img_03/pred-0.png". */
    artifactUrl(runId: string, relPath: string): string {
        const encoded = relPath.split('/').map(encodeURIComponent).join('/');
        return this.baseUrl + `/api/runs/${encodeURIComponent(runId)}/files/${encoded}`;
    }

    private async getArtifactText(runId: string, relPath: string): Promise<string> {
        const response = await this.request(
            `/api/runs/${encodeURIComponent(runId)}/files/` +
                relPath.split('/').map(encodeURIComponent).join('/'),
        );
        return response.text();
    }

    /** The run's sampled manifest: ground-truth boxes per image. */
    async getManifest(runId: string): Promise<ManifestRecord[]> {
        return parseJsonl<ManifestRecord>(await this.getArtifactText(runId, 'manifest.jsonl'));
    }

    /** Detections per image, keyed by image id. */
    async getPredictions(runId: string): Promise<Map<string, DetectionJson[]>> {
        const lines = parseJsonl<PredictionLine>(
            await this.getArtifactText(runId, 'predictions.jsonl'),
        );
        return new Map(lines.map((line) => [line.id, line.detections]));
    }

    // --- annotations and remediations -------------------------------------

    async getAnnotations(runId: string): Promise<AnnotationJson[]> {
        const body = await this.getJson<{ annotations: AnnotationJson[] }>(
            `/api/runs/${encodeURIComponent(runId)}/annotations`,
        );
        return body.annotations;
    }

    async postAnnotation(
        runId: string,
        payload: { image_id: string; hypothesis: string; note?: string; box_index?: number },
    ): Promise<AnnotationJson> {
        const body = await this.postJson<{ annotation: AnnotationJson }>(
            `/api/runs/${encodeURIComponent(runId)}/annotations`,
            payload,
        );
        return body.annotation;
    }

    getRemediations(runId: string): Promise<RemediationsIndex> {
        return this.getJson(`/api/runs/${encodeURIComponent(runId)}/remediations`);
    }

    postRemediation(runId: string, payload: unknown): Promise<RemediationStarted> {
        return this.postJson(`/api/runs/${encodeURIComponent(runId)}/remediations`, payload);
    }

    compare(baseId: string, targetId: string): Promise<ComparisonJson> {
        const params = new URLSearchParams({ base: baseId, target: targetId });
        return this.getJson(`/api/compare?${params.toString()}`);
    }
}
