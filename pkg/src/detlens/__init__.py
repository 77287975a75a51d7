"""detlens: a debugging toolkit for black-box human/object detectors.

Workflow: sample a dataset, extract predictions through a detector
adapter, categorize per-image failures, generate perturbation-based
saliency explanations, audit and remediate labels, and compare runs
before/after remediation. A local HTTP service plus browser UI carries
the expert review loop.
"""

from detlens.geometry import BBox, Detection, box_inside, clamp_box, iou

__all__ = [
    "BBox",
    "Detection",
    "box_inside",
    "clamp_box",
    "iou",
]

__version__ = "0.1.0"
