import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError, FetchLike, parseJsonl } from '../src/api.js';

interface Call {
    url: string;
    init?: RequestInit;
}

function fakeFetch(
    responder: (url: string, init?: RequestInit) => Response,
): { fetch: FetchLike; calls: Call[] } {
    const calls: Call[] = [];
    return {
        calls,
        fetch: async (url, init) => {
            calls.push({ url, init });
            return responder(url, init);
        },
    };
}

function jsonResponse(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { 'content-type': 'application/json' },
    });
}

describe('parseJsonl', () => {
    it('splits lines and skips blanks', () => {
        const text = '{"id": "a"}\n\n{"id": "b"}\n';
        expect(parseJsonl<{ id: string }>(text)).toEqual([{ id: 'a' }, { id: 'b' }]);
    });

    it('empty text gives an empty list', () => {
        expect(parseJsonl('')).toEqual([]);
    });
});

describe('ApiClient url building', () => {
    it('getImages composes category and page params', async () => {
        const { fetch, calls } = fakeFetch(() =>
            jsonResponse({ images: [], total: 0, page: 2, page_size: 50, pages: 3 }),
        );
        const api = new ApiClient('', fetch);
        await api.getImages('r1', 'Mislocalization', 2);
        expect(calls[0].url).toBe('/api/runs/r1/images?category=Mislocalization&page=2');
    });

    it('getImages omits defaults', async () => {
        const { fetch, calls } = fakeFetch(() =>
            jsonResponse({ images: [], total: 0, page: 1, page_size: 50, pages: 1 }),
        );
        const api = new ApiClient('', fetch);
        await api.getImages('r1');
        expect(calls[0].url).toBe('/api/runs/r1/images');
    });

    it('artifact urls keep slashes between segments but encode within them', () => {
        const api = new ApiClient('http://x');
        expect(api.artifactUrl('r1', 'explanations/img_03/pred-0.png')).toBe(
            'http://x/api/runs/r1/files/explanations/img_03/pred-0.png',
        );
        expect(api.artifactUrl('r 1', 'a b/c.png')).toBe('http://x/api/runs/r%201/files/a%20b/c.png');
    });

    it('compare uses query parameters', async () => {
        const { fetch, calls } = fakeFetch(() =>
            jsonResponse({
                schema_version: 1,
                base_run_id: 'a',
                target_run_id: 'b',
                table: { total: 0, rows: [] },
                transitions: [],
            }),
        );
        const api = new ApiClient('', fetch);
        await api.compare('a', 'b');
        expect(calls[0].url).toBe('/api/compare?base=a&target=b');
    });
});

describe('ApiClient envelopes', () => {
    it('listRuns unwraps the runs envelope', async () => {
        const summaries = [
            {
                run_id: 'r1',
                status: 'completed',
                created_at: '2026-08-19T00:00:00+00:00',
                parent_run_id: null,
                error: null,
            },
        ];
        const api = new ApiClient('', fakeFetch(() => jsonResponse({ runs: summaries })).fetch);
        expect(await api.listRuns()).toEqual(summaries);
    });

    it('getPredictions indexes detections by image id', async () => {
        const lines =
            JSON.stringify({ id: 'img_1', detections: [{ box: [0, 0, 5, 5], objectness: 1, class_probs: null }] }) +
            '\n' +
            JSON.stringify({ id: 'img_2', detections: [] });
        const api = new ApiClient('', fakeFetch(() => new Response(lines)).fetch);
        const map = await api.getPredictions('r1');
        expect([...map.keys()]).toEqual(['img_1', 'img_2']);
        expect(map.get('img_1')![0].objectness).toBe(1);
    });

    it('postAnnotation sends JSON and unwraps the annotation', async () => {
        const created = {
            schema_version: 1,
            run_id: 'r1',
            image_id: 'img_1',
            box_index: null,
            hypothesis: 'label-error',
            note: 'n',
            author: '',
            created_at: 'now',
        };
        const { fetch, calls } = fakeFetch(() => jsonResponse({ annotation: created }, 201));
        const api = new ApiClient('', fetch);
        const result = await api.postAnnotation('r1', {
            image_id: 'img_1',
            hypothesis: 'label-error',
            note: 'n',
        });
        expect(result).toEqual(created);
        expect(calls[0].init?.method).toBe('POST');
        expect(JSON.parse(String(calls[0].init?.body))).toEqual({
            image_id: 'img_1',
            hypothesis: 'label-error',
            note: 'n',
        });
    });
});

describe('ApiClient errors', () => {
    it('maps the service error envelope onto ApiError', async () => {
        const api = new ApiClient(
            '',
            fakeFetch(() =>
                jsonResponse({ error: { code: 'not_found', message: "no run 'ghost'" } }, 404),
            ).fetch,
        );
        const err = await api.getStats('ghost').catch((e) => e);
        expect(err).toBeInstanceOf(ApiError);
        expect(err.status).toBe(404);
        expect(err.code).toBe('not_found');
        expect(err.message).toContain('ghost');
    });

    it('survives non-JSON error bodies', async () => {
        const api = new ApiClient(
            '',
            fakeFetch(() => new Response('<html>boom</html>', { status: 502 })).fetch,
        );
        const err = await api.getRun('r1').catch((e) => e);
        expect(err).toBeInstanceOf(ApiError);
        expect(err.status).toBe(502);
        expect(err.code).toBe('http_error');
    });

    it('conflict code comes through for remediation posts', async () => {
        const api = new ApiClient(
            '',
            fakeFetch(() =>
                jsonResponse({ error: { code: 'conflict', message: 'already in flight' } }, 409),
            ).fetch,
        );
        const err = await api.postRemediation('r1', { action: 'relabel' }).catch((e) => e);
        expect(err.code).toBe('conflict');
    });
});
