/**
 * View state and its URL (hash) encoding.
 *
 * The whole UI is deep-linkable: run, category filter, selected image and
 * target box, and comparison pairs all round-trip through location.hash,
 * so a reviewer can share exactly what they are looking at.
 *
 *   #/                                  runs index
 *   #/run/<id>?category=..&image=..&box=..
 *   #/compare/<base>/<target>
 */

import { Category, CATEGORY_ORDER } from './types.js';

export interface ViewState {
    view: 'runs' | 'run' | 'compare';
    runId?: string;
    category?: Category;
    imageId?: string;
    /** Selected target box token, e.g. "gt-0" or "pred-2". */
    box?: string;
    compareBase?: string;
    compareTarget?: string;
}

export function isCategory(value: string): value is Category {
    return (CATEGORY_ORDER as string[]).includes(value);
}

export function parseHash(hash: string): ViewState {
    let raw = hash.startsWith('#') ? hash.slice(1) : hash;
    if (!raw.startsWith('/')) raw = '/' + raw;

    const queryAt = raw.indexOf('?');
    const path = queryAt >= 0 ? raw.slice(0, queryAt) : raw;
    const params = new URLSearchParams(queryAt >= 0 ? raw.slice(queryAt + 1) : '');
    const segments = path.split('/').filter((s) => s.length > 0).map(decodeURIComponent);

    if (segments[0] === 'run' && segments.length >= 2) {
        const state: ViewState = { view: 'run', runId: segments[1] };
        const category = params.get('category');
        if (category && isCategory(category)) state.category = category;
        const image = params.get('image');
        if (image) state.imageId = image;
        const box = params.get('box');
        if (box) state.box = box;
        return state;
    }
    if (segments[0] === 'compare' && segments.length >= 3) {
        return { view: 'compare', compareBase: segments[1], compareTarget: segments[2] };
    }
    return { view: 'runs' };
}

export function buildHash(state: ViewState): string {
    if (state.view === 'run' && state.runId) {
        let hash = `#/run/${encodeURIComponent(state.runId)}`;
        const params = new URLSearchParams();
        if (state.category) params.set('category', state.category);
        if (state.imageId) params.set('image', state.imageId);
        if (state.box) params.set('box', state.box);
        const query = params.toString();
        return query ? `${hash}?${query}` : hash;
    }
    if (state.view === 'compare' && state.compareBase && state.compareTarget) {
        return (
            '#/compare/' +
            encodeURIComponent(state.compareBase) +
            '/' +
            encodeURIComponent(state.compareTarget)
        );
    }
    return '#/';
}
