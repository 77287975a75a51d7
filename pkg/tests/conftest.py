import pytest

from detlens import synth
from detlens.detector import load_detector_config
from detlens.pipeline import RemediationPlan, RunConfig, apply_remediation, run_debug
from detlens.saliency import MaskSpec


@pytest.fixture(scope="session")
def demo_fixture(tmp_path_factory):
    """The bundled 50-image synthetic dataset (generated once per session)."""
    return synth.generate_fixture(tmp_path_factory.mktemp("demo"))


def demo_config(fixture, **overrides):
    base = dict(
        manifest_path=str(fixture.manifest),
        detector=load_detector_config(fixture.detector_config),
        seed=11,
        explain_k=5,
        mask_spec=MaskSpec(grid_size=8, keep_probability=0.5, num_masks=200, seed=5),
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def demo_run(demo_fixture, tmp_path_factory):
    """A completed pipeline run over the demo dataset (shared, read-only)."""
    runs_root = tmp_path_factory.mktemp("runs")
    record = run_debug(demo_config(demo_fixture), runs_root)
    assert record.status == "completed", record.error
    return runs_root, record


@pytest.fixture(scope="session")
def demo_child_run(demo_run):
    """A relabel remediation child of the shared demo run."""
    runs_root, parent = demo_run
    child = apply_remediation(
        RemediationPlan(run_id=parent.run_id, action="relabel"), runs_root
    )
    assert child.status == "completed", child.error
    return runs_root, parent, child
