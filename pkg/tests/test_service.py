import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from datasteer.corpus import save_corpus
from datasteer.service import create_app
from conftest import random_corpus

FAST_CONFIG = {
    "epochs": 2,
    "batch_size": 16,
    "hidden": [16, 16, 8, 8, 4],
    "images_per_accept": 6,
    "max_iter": 3,
    "seed": 0,
    "provider": {"kind": "mock", "seed": 0},
}


@pytest.fixture()
def corpus_file(tmp_path):
    corpus = random_corpus(seed=21, n_images=24, n_labels=6, dim=8,
                           with_predictions=True, generated_frac=0.25)
    path = tmp_path / "corpus.jsonl"
    save_corpus(corpus, path)
    return str(path)


@pytest.fixture()
def client():
    return TestClient(create_app())


def make_session(client, corpus_file, config=None):
    resp = client.post("/sessions", json={"corpus_path": corpus_file,
                                          "config": config or FAST_CONFIG})
    assert resp.status_code == 200, resp.text
    return resp.json()["session_id"]


def wait_for_job(client, sid, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/sessions/{sid}/jobs/{job_id}").json()
        if status["status"] != "running":
            return status
        time.sleep(0.05)
    raise TimeoutError("job did not finish")


class TestCreate:
    def test_create_returns_id_and_complete_projection(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        proj = client.get(f"/sessions/{sid}/projection").json()
        assert proj["corpus_version"] == 0
        assert len(proj["points"]) == 24 + 6
        assert all("x" in p and "y" in p for p in proj["points"])

    def test_malformed_corpus_422_with_detail(self, client, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"type": "meta", "dimension": 2, "classes": ["a"]}\n{nope\n')
        resp = client.post("/sessions", json={"corpus_path": str(bad)})
        assert resp.status_code == 422
        detail = resp.json()["detail"]
        assert detail["code"] == "MalformedRecord"
        assert detail["detail"]["stage"] == "ingest"

    def test_duplicate_create_distinct_sessions(self, client, corpus_file):
        a = make_session(client, corpus_file)
        b = make_session(client, corpus_file)
        assert a != b

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/metrics").status_code == 404


class TestReads:
    def test_metrics_single_initial_point(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        data = client.get(f"/sessions/{sid}/metrics").json()
        assert len(data["timeline"]) == 1
        point = data["timeline"][0]
        assert point["generated_count"] == 6
        assert point["informativeness"] is not None

    def test_metrics_without_any_generated_is_null_point(self, client, tmp_path):
        corpus = random_corpus(seed=22, n_images=12, n_labels=4, dim=8)
        path = tmp_path / "orig.jsonl"
        save_corpus(corpus, path)
        sid = make_session(client, str(path))
        data = client.get(f"/sessions/{sid}/metrics").json()
        assert len(data["timeline"]) == 1
        assert data["timeline"][0]["generated_count"] == 0
        assert data["timeline"][0]["informativeness"] is None

    def test_treecut_budget_one_is_root(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        data = client.get(f"/sessions/{sid}/treecut", params={"budget": 1}).json()
        assert len(data["nodes"]) == 1
        members = data["nodes"][0]["members"]
        assert len(members) == 6

    def test_treecut_pie_counts_present(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        data = client.get(f"/sessions/{sid}/treecut", params={"budget": 4}).json()
        for node in data["nodes"]:
            assert node["original_count"] >= 0
            assert node["generated_count"] >= 0

    def test_image_filters(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        gen = client.get(f"/sessions/{sid}/images", params={"kind": "generated"}).json()
        assert len(gen["images"]) == 6
        both = client.get(f"/sessions/{sid}/images",
                          params={"kind": "generated", "class_name": "cls0"}).json()
        assert all(im["class_name"] == "cls0" and im["kind"] == "generated"
                   for im in both["images"])
        lab = client.get(f"/sessions/{sid}/images", params={"label": "l0"}).json()
        assert lab["images"]  # l0 has positive degree in the fixture

    def test_image_detail(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        detail = client.get(f"/sessions/{sid}/images/i000").json()
        assert detail["id"] == "i000"
        assert detail["labels"]
        assert detail["prediction"] is not None

    def test_labels_ranked_by_ratio(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        rows = client.get(f"/sessions/{sid}/labels").json()["labels"]
        ratios = [r["ratio"] for r in rows]
        assert ratios == sorted(ratios, reverse=True)
        for r in rows:
            assert r["original_count"] + r["generated_count"] == r["frequency"]


class TestFeedbackFlow:
    def test_full_delete_accept_flow(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        gen = client.get(f"/sessions/{sid}/images",
                         params={"kind": "generated", "class_name": "cls0"}).json()["images"]
        ids = [im["id"] for im in gen][:2]
        resp = client.post(f"/sessions/{sid}/feedback",
                           json={"kind": "delete", "class_name": "cls0", "image_ids": ids})
        assert resp.status_code == 200
        job = wait_for_job(client, sid, resp.json()["job_id"])
        assert job["status"] == "done", job
        pid = job["prompt_id"]

        prompts = client.get(f"/sessions/{sid}/prompts").json()
        assert any(p["prompt_id"] == pid for p in prompts["pending"])
        trace = client.get(f"/sessions/{sid}/pending/{pid}/trace").json()
        assert trace["trace"]["steps"]

        before = client.get(f"/sessions/{sid}/metrics").json()
        accept = client.post(f"/sessions/{sid}/prompts/{pid}/accept")
        assert accept.status_code == 200
        after = client.get(f"/sessions/{sid}/metrics").json()
        assert after["corpus_version"] == before["corpus_version"] + 1
        assert len(after["timeline"]) == len(before["timeline"]) + 1

        proj = client.get(f"/sessions/{sid}/projection").json()
        assert proj["corpus_version"] == after["corpus_version"]
        assert len(proj["points"]) == 24 + 6 + 6  # images + accept batch + labels

    def test_conflicting_job_409(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        gen = client.get(f"/sessions/{sid}/images",
                         params={"kind": "generated", "class_name": "cls0"}).json()["images"]
        ids = [im["id"] for im in gen][:2]
        body = {"kind": "delete", "class_name": "cls0", "image_ids": ids}
        first = client.post(f"/sessions/{sid}/feedback", json=body)
        second = client.post(f"/sessions/{sid}/feedback", json=body)
        codes = {first.status_code, second.status_code}
        # the first job may already be done when the second arrives; only a
        # genuinely concurrent pair must conflict
        if second.status_code == 409:
            assert second.json()["detail"]["code"] == "ConflictingJob"
        wait_for_job(client, sid, first.json()["job_id"])

    def test_unknown_ids_422(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        resp = client.post(f"/sessions/{sid}/feedback",
                           json={"kind": "delete", "class_name": "cls0",
                                 "image_ids": ["ghost1", "ghost2"]})
        assert resp.status_code == 422
        assert resp.json()["detail"]["code"] == "UnknownImageIds"

    def test_reject_keeps_version(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        gen = client.get(f"/sessions/{sid}/images",
                         params={"kind": "generated", "class_name": "cls1"}).json()["images"]
        ids = [im["id"] for im in gen][:1]
        resp = client.post(f"/sessions/{sid}/feedback",
                           json={"kind": "add", "class_name": "cls1", "image_ids": ids})
        job = wait_for_job(client, sid, resp.json()["job_id"])
        pid = job["prompt_id"]
        before = client.get(f"/sessions/{sid}/prompts").json()
        reject = client.post(f"/sessions/{sid}/prompts/{pid}/reject")
        assert reject.status_code == 200
        after = client.get(f"/sessions/{sid}/prompts").json()
        assert after["corpus_version"] == before["corpus_version"]
        assert all(p["prompt_id"] != pid for p in after["pending"])
        # current prompt version unchanged
        cur = {p["class_name"]: p["version"] for p in after["prompts"]}
        assert cur["cls1"] == 0


class TestPromptLifecycle:
    def test_manual_edit_bumps_version(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        prompts = client.get(f"/sessions/{sid}/prompts").json()["prompts"]
        target = prompts[0]
        resp = client.patch(f"/sessions/{sid}/prompts/{target['id']}",
                            json={"text": "A [painting | photo] of a cls0"})
        assert resp.status_code == 200
        assert resp.json()["version"] == target["version"] + 1

    def test_manual_edit_invalid_template_422(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        prompts = client.get(f"/sessions/{sid}/prompts").json()["prompts"]
        resp = client.patch(f"/sessions/{sid}/prompts/{prompts[0]['id']}",
                            json={"text": "A [broken of a cls0"})
        assert resp.status_code == 422

    def test_delete_prompt(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        prompts = client.get(f"/sessions/{sid}/prompts").json()["prompts"]
        resp = client.delete(f"/sessions/{sid}/prompts/{prompts[0]['id']}")
        assert resp.status_code == 200
        left = client.get(f"/sessions/{sid}/prompts").json()["prompts"]
        assert len(left) == len(prompts) - 1

    def test_event_log_records_flow(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        events = client.get(f"/sessions/{sid}/events").json()["events"]
        assert events[0]["event"] == "create"

    def test_event_log_persisted_to_disk(self, client, corpus_file, tmp_path):
        import json as json_mod
        log_dir = tmp_path / "logs"
        config = dict(FAST_CONFIG, log_dir=str(log_dir))
        sid = make_session(client, corpus_file, config=config)
        prompts = client.get(f"/sessions/{sid}/prompts").json()["prompts"]
        client.patch(f"/sessions/{sid}/prompts/{prompts[0]['id']}",
                     json={"text": "A [sketch] of a cls0"})
        files = list(log_dir.glob("*.events.jsonl"))
        assert len(files) == 1
        lines = [json_mod.loads(l) for l in files[0].read_text().splitlines()]
        assert [l["event"] for l in lines] == ["create", "edit"]


class TestSnapshotConsistency:
    def test_concurrent_reads_never_mix_versions(self, client, corpus_file):
        sid = make_session(client, corpus_file)
        gen = client.get(f"/sessions/{sid}/images",
                         params={"kind": "generated", "class_name": "cls0"}).json()["images"]
        ids = [im["id"] for im in gen][:2]
        resp = client.post(f"/sessions/{sid}/feedback",
                           json={"kind": "delete", "class_name": "cls0", "image_ids": ids})
        job = wait_for_job(client, sid, resp.json()["job_id"])
        pid = job["prompt_id"]

        observations = []
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                proj = client.get(f"/sessions/{sid}/projection").json()
                # derived content must match the version stamped on the payload
                observations.append((proj["corpus_version"], len(proj["points"])))

        threads = [threading.Thread(target=reader) for _ in range(4)]
        for t in threads:
            t.start()
        client.post(f"/sessions/{sid}/prompts/{pid}/accept")
        time.sleep(0.2)
        stop.set()
        for t in threads:
            t.join()

        by_version = {}
        for version, n_points in observations:
            by_version.setdefault(version, set()).add(n_points)
        assert set(by_version) <= {0, 1}
        for version, sizes in by_version.items():
            assert len(sizes) == 1, f"version {version} served mixed sizes {sizes}"
        assert by_version[0] == {30}
        if 1 in by_version:
            assert by_version[1] == {36}
