import json
import shutil
import time

import pytest
from fastapi.testclient import TestClient

import detlens.service as service_mod
from detlens.detector import DetectorConfig
from detlens.pipeline import RunConfig, RunRecord, run_dir, save_run
from detlens.service import create_app


def _copy_runs(source_root, dest_root, run_ids):
    dest_root.mkdir(parents=True, exist_ok=True)
    for run_id in run_ids:
        shutil.copytree(run_dir(source_root, run_id), dest_root / run_id)


@pytest.fixture(scope="module")
def service_env(demo_child_run, tmp_path_factory):
    """A private runs root with the demo parent+child, wrapped in a client."""
    runs_root, parent, child = demo_child_run
    root = tmp_path_factory.mktemp("service-runs")
    _copy_runs(runs_root, root, [parent.run_id, child.run_id])
    client = TestClient(create_app(root))
    return client, root, parent, child


@pytest.fixture
def mutable_env(demo_run, tmp_path):
    """A throwaway root holding only the parent run, for write tests."""
    runs_root, parent = demo_run
    root = tmp_path / "runs"
    _copy_runs(runs_root, root, [parent.run_id])
    client = TestClient(create_app(root))
    return client, root, parent


def _fake_running_run(root, run_id):
    (root / run_id).mkdir(parents=True)
    record = RunRecord(
        run_id=run_id,
        config=RunConfig(
            manifest_path="unused.jsonl",
            detector=DetectorConfig(kind="mock", manifest="unused.jsonl"),
        ),
        created_at="2026-01-01T00:00:00+00:00",
        status="running",
    )
    save_run(root, record)
    return record


class TestReadEndpoints:
    def test_healthz(self, service_env):
        client, *_ = service_env
        response = client.get("/healthz")
        assert response.status_code == 200
        assert response.json() == {"status": "ok"}

    def test_runs_index_lists_both_runs(self, service_env):
        client, _, parent, child = service_env
        body = client.get("/api/runs").json()
        by_id = {r["run_id"]: r for r in body["runs"]}
        assert set(by_id) == {parent.run_id, child.run_id}
        assert by_id[parent.run_id]["status"] == "completed"
        assert by_id[child.run_id]["parent_run_id"] == parent.run_id

    def test_run_detail_mirrors_run_json(self, service_env):
        client, root, parent, _ = service_env
        body = client.get(f"/api/runs/{parent.run_id}").json()
        on_disk = json.loads((root / parent.run_id / "run.json").read_text())
        assert body == on_disk

    def test_unknown_run_is_not_found(self, service_env):
        client, *_ = service_env
        response = client.get("/api/runs/ghost")
        assert response.status_code == 404
        assert response.json()["error"]["code"] == "not_found"

    def test_stats_mirror_categories_artifact(self, service_env):
        client, root, parent, _ = service_env
        body = client.get(f"/api/runs/{parent.run_id}/stats").json()
        on_disk = json.loads((root / parent.run_id / "categories.json").read_text())
        assert body == on_disk["stats"]
        assert body["percentages"]["Mislocalization"] == 40.0

    def test_repeated_reads_identical(self, service_env):
        client, _, parent, _ = service_env
        url = f"/api/runs/{parent.run_id}/stats"
        assert client.get(url).json() == client.get(url).json()

    def test_images_pagination_envelope(self, service_env):
        client, _, parent, _ = service_env
        body = client.get(f"/api/runs/{parent.run_id}/images").json()
        assert body["total"] == 5
        assert body["page"] == 1 and body["pages"] == 1
        assert {img["id"] for img in body["images"]} == {
            "img_28", "img_29", "img_32", "img_35", "img_49",
        }
        assert all("matching" in img for img in body["images"])

    def test_images_category_filter(self, service_env):
        client, _, parent, _ = service_env
        body = client.get(
            f"/api/runs/{parent.run_id}/images",
            params={"category": "Mislocalization"},
        ).json()
        assert body["total"] == 2
        assert {img["category"] for img in body["images"]} == {"Mislocalization"}

    def test_images_unknown_category_is_bad_request(self, service_env):
        client, _, parent, _ = service_env
        response = client.get(
            f"/api/runs/{parent.run_id}/images", params={"category": "Sideways"}
        )
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "bad_request"

    def test_images_page_must_be_positive(self, service_env):
        client, _, parent, _ = service_env
        response = client.get(f"/api/runs/{parent.run_id}/images", params={"page": 0})
        assert response.status_code == 400

    def test_explanations_for_failing_image(self, service_env):
        client, _, parent, _ = service_env
        entry = parent.explanations[0]
        body = client.get(
            f"/api/runs/{parent.run_id}/images/{entry['image_id']}/explanations"
        ).json()
        assert entry in body["explanations"]

    def test_explanations_empty_for_correct_image(self, service_env):
        client, _, parent, _ = service_env
        body = client.get(
            f"/api/runs/{parent.run_id}/images/img_32/explanations"
        ).json()
        assert body["explanations"] == []

    def test_explanations_unknown_image(self, service_env):
        client, _, parent, _ = service_env
        response = client.get(f"/api/runs/{parent.run_id}/images/img_99/explanations")
        assert response.status_code == 404

    def test_image_file_served_as_png(self, service_env):
        client, _, parent, _ = service_env
        response = client.get(f"/api/runs/{parent.run_id}/images/img_35/file")
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        assert response.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_overlay_artifact_served_as_png(self, service_env):
        client, root, parent, _ = service_env
        overlay = parent.explanations[0]["overlay"]
        response = client.get(f"/api/runs/{parent.run_id}/files/{overlay}")
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        assert response.content == (root / parent.run_id / overlay).read_bytes()

    def test_artifact_traversal_is_rejected(self, service_env):
        client, _, parent, child = service_env
        response = client.get(
            f"/api/runs/{parent.run_id}/files/..%2F{child.run_id}%2Frun.json"
        )
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "bad_request"

    def test_audit_endpoint(self, service_env):
        client, _, parent, child = service_env
        assert client.get(f"/api/runs/{parent.run_id}/audit").json()["boxes_outside"] == 1
        assert client.get(f"/api/runs/{child.run_id}/audit").json()["boxes_outside"] == 0

    def test_compare_parent_child(self, service_env):
        client, _, parent, child = service_env
        body = client.get(
            "/api/compare", params={"base": parent.run_id, "target": child.run_id}
        ).json()
        assert body["base_run_id"] == parent.run_id
        assert body["transitions"] == []
        assert all(row["delta"] == 0 for row in body["table"]["rows"])

    def test_compare_unknown_run(self, service_env):
        client, _, parent, _ = service_env
        response = client.get(
            "/api/compare", params={"base": parent.run_id, "target": "ghost"}
        )
        assert response.status_code == 404


class TestRunInProgress:
    def test_stats_of_running_run(self, mutable_env):
        client, root, _ = mutable_env
        _fake_running_run(root, "busy")
        response = client.get("/api/runs/busy/stats")
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "run_in_progress"

    def test_compare_against_running_run(self, mutable_env):
        client, root, parent = mutable_env
        _fake_running_run(root, "busy")
        response = client.get(
            "/api/compare", params={"base": parent.run_id, "target": "busy"}
        )
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "run_in_progress"

    def test_remediating_running_run(self, mutable_env):
        client, root, _ = mutable_env
        _fake_running_run(root, "busy")
        response = client.post("/api/runs/busy/remediations", json={"action": "relabel"})
        assert response.status_code == 409
        assert response.json()["error"]["code"] == "run_in_progress"


class TestAnnotations:
    def test_post_then_immediately_visible(self, mutable_env):
        client, _, parent = mutable_env
        payload = {
            "image_id": "img_35",
            "hypothesis": "occlusion",
            "note": "second person half out of frame",
            "author": "reviewer",
        }
        response = client.post(f"/api/runs/{parent.run_id}/annotations", json=payload)
        assert response.status_code == 201
        created = response.json()["annotation"]
        assert created["hypothesis"] == "occlusion"
        listed = client.get(f"/api/runs/{parent.run_id}/annotations").json()["annotations"]
        assert created in listed

    def test_bad_hypothesis_rejected(self, mutable_env):
        client, _, parent = mutable_env
        response = client.post(
            f"/api/runs/{parent.run_id}/annotations",
            json={"image_id": "img_35", "hypothesis": "cosmic-rays"},
        )
        assert response.status_code == 400
        assert "hypothesis" in response.json()["error"]["message"]

    def test_unknown_image_rejected(self, mutable_env):
        client, _, parent = mutable_env
        response = client.post(
            f"/api/runs/{parent.run_id}/annotations",
            json={"image_id": "img_99", "hypothesis": "other"},
        )
        assert response.status_code == 400

    def test_missing_field_rejected(self, mutable_env):
        client, _, parent = mutable_env
        response = client.post(
            f"/api/runs/{parent.run_id}/annotations", json={"hypothesis": "other"}
        )
        assert response.status_code == 400
        assert "image_id" in response.json()["error"]["message"]


def _wait_for_run(client, run_id, timeout=90.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        response = client.get(f"/api/runs/{run_id}")
        if response.status_code == 200 and response.json()["status"] != "running":
            return response.json()
        time.sleep(0.1)
    raise AssertionError(f"run {run_id} did not settle within {timeout}s")


class TestRemediations:
    def test_relabel_flow_end_to_end(self, mutable_env):
        client, _, parent = mutable_env
        response = client.post(
            f"/api/runs/{parent.run_id}/remediations",
            json={"action": "relabel", "note": "clamp everything"},
        )
        assert response.status_code == 202
        child_id = response.json()["child_run_id"]
        child = _wait_for_run(client, child_id)
        assert child["status"] == "completed"
        assert child["parent_run_id"] == parent.run_id
        # the applied plan shows up in the parent's log with the child id
        plans = client.get(f"/api/runs/{parent.run_id}/remediations").json()
        applied = [p for p in plans["remediations"] if p["child_run_id"] == child_id]
        assert applied and applied[0]["status"] == "applied"
        # child audits clean and compares clean against the parent
        assert client.get(f"/api/runs/{child_id}/audit").json()["boxes_outside"] == 0
        comparison = client.get(
            "/api/compare", params={"base": parent.run_id, "target": child_id}
        ).json()
        assert comparison["transitions"] == []

    def test_second_remediation_conflicts_while_first_runs(
        self, mutable_env, monkeypatch
    ):
        client, _, parent = mutable_env
        real_apply = service_mod.apply_remediation
        started = time.monotonic()

        def slow_apply(plan, runs_root, run_id=None):
            time.sleep(0.8)
            return real_apply(plan, runs_root, run_id=run_id)

        monkeypatch.setattr(service_mod, "apply_remediation", slow_apply)
        first = client.post(
            f"/api/runs/{parent.run_id}/remediations", json={"action": "relabel"}
        )
        assert first.status_code == 202
        second = client.post(
            f"/api/runs/{parent.run_id}/remediations", json={"action": "relabel"}
        )
        assert second.status_code == 409
        assert second.json()["error"]["code"] == "conflict"
        assert time.monotonic() - started < 45
        # the in-flight marker clears once the child lands
        child_id = first.json()["child_run_id"]
        _wait_for_run(client, child_id)
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            if client.get(
                f"/api/runs/{parent.run_id}/remediations"
            ).json()["in_flight"] is None:
                break
            time.sleep(0.05)
        else:
            raise AssertionError("in-flight remediation never cleared")

    def test_unknown_action_is_bad_request(self, mutable_env):
        client, _, parent = mutable_env
        response = client.post(
            f"/api/runs/{parent.run_id}/remediations", json={"action": "retrain"}
        )
        assert response.status_code == 400

    def test_pad_without_amounts_is_bad_request(self, mutable_env):
        client, _, parent = mutable_env
        response = client.post(
            f"/api/runs/{parent.run_id}/remediations", json={"action": "pad"}
        )
        assert response.status_code == 400
        assert "padding" in response.json()["error"]["message"]


class TestStaticUi:
    def test_ui_mounted_when_bundle_exists(self, demo_run, tmp_path):
        runs_root, parent = demo_run
        root = tmp_path / "runs"
        _copy_runs(runs_root, root, [parent.run_id])
        ui = tmp_path / "dist"
        ui.mkdir()
        ui.joinpath("index.html").write_text("<!doctype html><title>lens</title>")
        client = TestClient(create_app(root, ui_dir=ui))
        page = client.get("/")
        assert page.status_code == 200
        assert "lens" in page.text
        # API routes keep precedence over the mount
        assert client.get("/api/runs").status_code == 200

    def test_no_mount_without_bundle(self, demo_run, tmp_path):
        runs_root, parent = demo_run
        root = tmp_path / "runs"
        _copy_runs(runs_root, root, [parent.run_id])
        # a ui dir without index.html is not a servable bundle
        empty_ui = tmp_path / "dist"
        empty_ui.mkdir()
        client = TestClient(create_app(root, ui_dir=empty_ui))
        assert client.get("/").status_code == 404

    def test_missing_runs_root_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="not a directory"):
            create_app(tmp_path / "absent")
