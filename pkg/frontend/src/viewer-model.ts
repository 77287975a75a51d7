/**
 * Pure model behind the explanation viewer: which boxes exist, which is
 * selected, which saliency overlay (if any) belongs to the selection.
 *
 * Deliberately free of fetch and DOM: overlays are identified by their
 * run-relative artifact path, and layer toggles are plain state — so
 * toggling and selecting can never trigger a refetch by construction.
 */

import { BoxCoords, DetectionJson, ExplanationEntry, ManifestRecord } from './types.js';

export interface BoxItem {
    kind: 'gt' | 'pred';
    /** Counted index — the index space used by matching and by target tokens. */
    index: number;
    /** Target token, e.g. "gt-0" or "pred-2". */
    token: string;
    box: BoxCoords;
    label: string;
}

/**
 * Build the selectable box list for an image. Ground-truth indices count
 * only non-ignore boxes, matching the server's token convention; ignore
 * boxes are returned separately for display.
 */
export function buildBoxItems(
    record: ManifestRecord,
    detections: DetectionJson[],
): { items: BoxItem[]; ignored: BoxCoords[] } {
    const items: BoxItem[] = [];
    const ignored: BoxCoords[] = [];
    let counted = 0;
    for (const gt of record.gt) {
        if (gt.tag === 'ignore') {
            ignored.push(gt.box);
            continue;
        }
        items.push({
            kind: 'gt',
            index: counted,
            token: `gt-${counted}`,
            box: gt.box,
            label: `gt ${counted}`,
        });
        counted += 1;
    }
    detections.forEach((det, i) => {
        items.push({
            kind: 'pred',
            index: i,
            token: `pred-${i}`,
            box: det.box,
            label: `pred ${i} (${det.objectness.toFixed(2)})`,
        });
    });
    return { items, ignored };
}

export class ViewerModel {
    readonly items: BoxItem[];
    readonly ignored: BoxCoords[];
    showGt = true;
    showPred = true;
    private selectedToken: string | null = null;

    constructor(
        record: ManifestRecord,
        detections: DetectionJson[],
        private explanations: ExplanationEntry[],
    ) {
        const built = buildBoxItems(record, detections);
        this.items = built.items;
        this.ignored = built.ignored;
    }

    visibleItems(): BoxItem[] {
        return this.items.filter((item) =>
            item.kind === 'gt' ? this.showGt : this.showPred,
        );
    }

    select(token: string | null): void {
        if (token !== null && !this.items.some((item) => item.token === token)) {
            token = null;
        }
        this.selectedToken = token;
    }

    selected(): BoxItem | null {
        return this.items.find((item) => item.token === this.selectedToken) ?? null;
    }

    /** Explanation entry for the selection, or null if explain never ran on it. */
    selectedExplanation(): ExplanationEntry | null {
        if (this.selectedToken === null) return null;
        return this.explanations.find((e) => e.target === this.selectedToken) ?? null;
    }

    /** Run-relative overlay path for the selection, or null. */
    overlayPath(): string | null {
        return this.selectedExplanation()?.overlay ?? null;
    }

    hasAnyExplanation(): boolean {
        return this.explanations.length > 0;
    }
}
