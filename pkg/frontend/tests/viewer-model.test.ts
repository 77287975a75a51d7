import { describe, expect, it } from 'vitest';

import { DetectionJson, ExplanationEntry, ManifestRecord } from '../src/types.js';
import { buildBoxItems, ViewerModel } from '../src/viewer-model.js';

const record: ManifestRecord = {
    id: 'img_1',
    path: 'images/img_1.png',
    width: 200,
    height: 100,
    gt: [
        { box: [10, 10, 40, 60], tag: null },
        { box: [0, 0, 5, 5], tag: 'ignore' },
        { box: [80, 20, 120, 80], tag: null },
    ],
};

const detections: DetectionJson[] = [
    { box: [12, 11, 41, 59], objectness: 0.9, class_probs: null },
];

function entry(target: string): ExplanationEntry {
    return {
        image_id: 'img_1',
        category: 'Mislocalization',
        target,
        overlay: `explanations/img_1/${target}.png`,
        raw: `explanations/img_1/${target}.f32`,
        sidecar: `explanations/img_1/${target}.json`,
        skipped_samples: 0,
    };
}

describe('buildBoxItems', () => {
    it('counts ground-truth indices past ignore boxes, like the server tokens do', () => {
        const { items, ignored } = buildBoxItems(record, detections);
        const gt = items.filter((i) => i.kind === 'gt');
        expect(gt.map((i) => i.token)).toEqual(['gt-0', 'gt-1']);
        // gt-1 is the third manifest box; the ignore box does not consume an index
        expect(gt[1].box).toEqual([80, 20, 120, 80]);
        expect(ignored).toEqual([[0, 0, 5, 5]]);
    });

    it('prediction tokens index the detection list directly', () => {
        const { items } = buildBoxItems(record, detections);
        const preds = items.filter((i) => i.kind === 'pred');
        expect(preds.map((i) => i.token)).toEqual(['pred-0']);
    });
});

describe('ViewerModel', () => {
    it('selecting an explained box exposes its overlay path', () => {
        const model = new ViewerModel(record, detections, [entry('pred-0')]);
        model.select('pred-0');
        expect(model.overlayPath()).toBe('explanations/img_1/pred-0.png');
    });

    it('selecting a box without an explanation yields no overlay', () => {
        const model = new ViewerModel(record, detections, [entry('pred-0')]);
        model.select('gt-0');
        expect(model.selected()?.token).toBe('gt-0');
        expect(model.selectedExplanation()).toBeNull();
        expect(model.overlayPath()).toBeNull();
    });

    it('selection swaps overlays without mutating the explanation list', () => {
        const explanations = [entry('pred-0'), entry('gt-1')];
        const model = new ViewerModel(record, detections, explanations);
        model.select('pred-0');
        const first = model.overlayPath();
        model.select('gt-1');
        expect(model.overlayPath()).toBe('explanations/img_1/gt-1.png');
        expect(first).toBe('explanations/img_1/pred-0.png');
        expect(explanations).toHaveLength(2);
    });

    it('unknown tokens clear the selection', () => {
        const model = new ViewerModel(record, detections, []);
        model.select('pred-99');
        expect(model.selected()).toBeNull();
    });

    it('layer toggles filter visible items without touching anything else', () => {
        const model = new ViewerModel(record, detections, []);
        expect(model.visibleItems()).toHaveLength(3);
        model.showGt = false;
        expect(model.visibleItems().map((i) => i.kind)).toEqual(['pred']);
        model.showPred = false;
        expect(model.visibleItems()).toHaveLength(0);
        model.showGt = true;
        expect(model.visibleItems().map((i) => i.kind)).toEqual(['gt', 'gt']);
    });

    it('hasAnyExplanation distinguishes the explain-not-run case', () => {
        expect(new ViewerModel(record, detections, []).hasAnyExplanation()).toBe(false);
        expect(new ViewerModel(record, detections, [entry('pred-0')]).hasAnyExplanation()).toBe(true);
    });
});
