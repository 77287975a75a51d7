/**
 * Wire types for the detlens HTTP API.
 *
 * These mirror the server's JSON one to one. The UI never derives numbers
 * of its own from these payloads — counts and percentages are displayed
 * exactly as received.
 */

export type Category =
    | 'UnderDetection'
    | 'OverDetection'
    | 'CorrectLocalization'
    | 'Mislocalization';

export const CATEGORY_ORDER: Category[] = [
    'UnderDetection',
    'OverDetection',
    'CorrectLocalization',
    'Mislocalization',
];

export const HYPOTHESIS_TAGS = [
    'dataset-bias',
    'label-error',
    'occlusion',
    'model-architecture',
    'other',
] as const;

export type Hypothesis = (typeof HYPOTHESIS_TAGS)[number];

/** [x1, y1, x2, y2] in pixels. */
export type BoxCoords = [number, number, number, number];

export interface RunSummary {
    run_id: string;
    status: 'running' | 'completed' | 'failed';
    created_at: string;
    parent_run_id: string | null;
    error: string | null;
}

export interface ExplanationEntry {
    image_id: string;
    category: Category;
    target: string; // "gt-<i>" or "pred-<i>"
    overlay: string; // run-relative artifact paths
    raw: string;
    sidecar: string;
    skipped_samples: number;
    flagged?: boolean;
}

export interface RunRecord {
    schema_version: number;
    run_id: string;
    created_at: string;
    status: 'running' | 'completed' | 'failed';
    error: string | null;
    parent_run_id: string | null;
    config: unknown;
    stages: Record<string, boolean>;
    artifacts: Record<string, string>;
    explanations: ExplanationEntry[];
}

export interface Stats {
    total: number;
    counts: Record<Category, number>;
    percentages: Record<Category, number>;
}

export interface MatchingJson {
    pairs: [number, number, number][]; // [pred index, gt index, iou]
    unmatched_preds: number[];
    unmatched_gts: number[];
}

export interface ImageRow {
    id: string;
    category: Category;
    matching: MatchingJson;
}

export interface ImagesPage {
    images: ImageRow[];
    total: number;
    page: number;
    page_size: number;
    pages: number;
}

export interface GtBoxJson {
    box: BoxCoords;
    tag: string | null; // "ignore" boxes are excluded from matching
}

export interface ManifestRecord {
    id: string;
    path: string;
    width: number;
    height: number;
    gt: GtBoxJson[];
}

export interface DetectionJson {
    box: BoxCoords;
    objectness: number;
    class_probs: number[] | null;
}

export interface PredictionLine {
    id: string;
    detections: DetectionJson[];
}

export interface AnnotationJson {
    schema_version: number;
    run_id: string;
    image_id: string;
    box_index: number | null;
    hypothesis: Hypothesis;
    note: string;
    author: string;
    created_at: string;
}

export interface RemediationPlanJson {
    schema_version: number;
    run_id: string;
    action: 'relabel' | 'pad';
    padding: BoxCoords | null; // [top, left, right, bottom]
    fill: number;
    note: string;
    status: string;
    child_run_id: string | null;
    created_at: string;
}

export interface RemediationsIndex {
    remediations: RemediationPlanJson[];
    in_flight: string | null;
}

export interface RemediationStarted {
    parent_run_id: string;
    child_run_id: string;
    status: string;
}

export interface ComparisonRowJson {
    category: Category;
    base: number;
    target: number;
    delta: number;
    higher_is_better: boolean;
    better: 'base' | 'target' | 'tie';
}

export interface TransitionJson {
    id: string;
    base_category: Category;
    target_category: Category;
}

export interface ComparisonJson {
    schema_version: number;
    base_run_id: string;
    target_run_id: string;
    table: { total: number; rows: ComparisonRowJson[] };
    transitions: TransitionJson[];
}

export interface AuditEntryJson {
    id: string;
    box_index: number;
    violation: string;
    box: BoxCoords;
}

export interface AuditJson {
    entries: AuditEntryJson[];
    boxes_audited: number;
    boxes_outside: number;
    counts_by_violation: Record<string, number>;
}
