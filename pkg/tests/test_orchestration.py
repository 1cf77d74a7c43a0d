import json

import pytest

from wbganlab.orchestration import TOY_E2E_DEFAULTS, run_recipe

MINI = {
    "n_phantoms": 16,
    "max_steps": 8,
    "instance_noise_steps": 8,
    "batch_size": 4,
    "vae_steps": 4,
    "sweep_trials": 1,
    "inversion_steps": 3,
    "n_real_study": 4,
    "n_per_model_study": 2,
}


@pytest.fixture(scope="module")
def mini_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    manifest = run_recipe("toy-e2e", dict(MINI), out_dir=out)
    return manifest, out


class TestRecipe:
    def test_unknown_recipe_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="unknown recipe"):
            run_recipe("mega-e2e", out_dir=tmp_path)

    def test_unknown_config_key_named_in_error(self, tmp_path):
        with pytest.raises(ValueError, match="learning_rat"):
            run_recipe("toy-e2e", {"learning_rat": 0.1}, out_dir=tmp_path)

    def test_all_stages_complete(self, mini_run):
        manifest, _ = mini_run
        assert manifest.failed_stage is None
        assert manifest.error is None
        assert manifest.stages_completed == [
            "phantom", "preprocess", "train-gan", "train-vae",
            "score", "sweep", "study",
        ]

    def test_artifacts_exist_with_digests(self, mini_run):
        manifest, _ = mini_run
        for name in ("gan_checkpoint", "vae_checkpoint", "scores",
                     "sweep_intensity", "study_manifest"):
            entry = manifest.artifacts[name]
            assert len(entry["sha256"]) == 64
            assert json.loads(json.dumps(entry))  # serializable

    def test_scores_json_schema(self, mini_run):
        manifest, _ = mini_run
        scores = json.loads(open(manifest.artifacts["scores"]["path"]).read())
        assert set(scores) == {"fid", "dfd", "n_real", "n_fake"}
        assert scores["fid"] >= 0.0 and scores["dfd"] >= 0.0

    def test_manifest_persisted_and_config_snapshot(self, mini_run):
        manifest, out = mini_run
        run_dirs = list(out.iterdir())
        assert len(run_dirs) == 1
        on_disk = json.loads((run_dirs[0] / "manifest.json").read_text())
        assert on_disk["config"] == {**TOY_E2E_DEFAULTS, **MINI}
        assert on_disk["recipe"] == "toy-e2e"
        assert on_disk["seeds"] == {"seed": 0}

    def test_rerun_reproduces_input_digest(self, mini_run, tmp_path):
        manifest, _ = mini_run
        cfg = dict(MINI)
        cfg["max_steps"] = 2  # phantoms depend only on seed/n/noise
        cfg["instance_noise_steps"] = 2
        again = run_recipe("toy-e2e", cfg, out_dir=tmp_path)
        assert again.input_digests["phantoms"] == manifest.input_digests["phantoms"]

    def test_failure_records_stage(self, tmp_path):
        bad = dict(MINI)
        bad["n_real_study"] = 1000  # more real items than phantoms exist
        with pytest.raises(ValueError):
            run_recipe("toy-e2e", bad, out_dir=tmp_path)
        run_dir = next(tmp_path.iterdir())
        on_disk = json.loads((run_dir / "manifest.json").read_text())
        assert on_disk["failed_stage"] == "study"
        assert on_disk["error"]
