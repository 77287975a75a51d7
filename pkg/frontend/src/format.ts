/**
 * Display formatting. Values pass through as received from the API —
 * formatting here is string rendering only, never recomputation.
 */

import { Category } from './types.js';

export const CATEGORY_LABELS: Record<Category, string> = {
    UnderDetection: 'Under-detection',
    OverDetection: 'Over-detection',
    CorrectLocalization: 'Correct Localization',
    Mislocalization: 'Mislocalization',
};

export const CATEGORY_COLORS: Record<Category, string> = {
    UnderDetection: '#d97706',
    OverDetection: '#7c3aed',
    CorrectLocalization: '#15803d',
    Mislocalization: '#dc2626',
};

/** 85.5 -> "85.5%", 20 -> "20.0%". One decimal, as the service's own reports print. */
export function formatPercent(value: number): string {
    return value.toFixed(1) + '%';
}

/** Signed delta: 25 -> "+25", -21 -> "-21", 0 -> "0". */
export function formatDelta(delta: number): string {
    return delta > 0 ? `+${delta}` : String(delta);
}

/** Direction arrow for a comparison row. */
export function directionArrow(higherIsBetter: boolean): string {
    return higherIsBetter ? '↑' : '↓';
}

export function formatTimestamp(iso: string): string {
    const date = new Date(iso);
    if (Number.isNaN(date.getTime())) return iso;
    return date.toLocaleString();
}
