"""Tests for the artifact pipelines and the command-line interface."""

import hashlib
import json
import warnings

import pytest

import seglab.pipelines as pipelines
from seglab.cli import main
from seglab.config import RunConfig, parse_config
from seglab.errors import ConfigError, PipelineError
from seglab.pipelines import run_pipeline

FAST_PROFILE = "profiles.n = 1200\nprofiles.tol = 1e-9\n"
FAST_LIMIT = FAST_PROFILE + "estimate.n = 801\n"


@pytest.fixture(scope="module")
def limit_cfg():
    return parse_config(FAST_LIMIT)


@pytest.fixture(scope="module")
def limit_run(limit_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("limit")
    return run_pipeline(limit_cfg, "limit", out_dir=out), out


class TestArtifacts:
    def test_limit_pipeline_passes(self, limit_run):
        result, out = limit_run
        assert result["passed"] is True
        assert (out / "limit.csv").exists()
        assert (out / "limit.json").exists()
        assert (out / "config.json").exists()

    def test_config_snapshot_echoes_defaults(self, limit_run, limit_cfg):
        _, out = limit_run
        snap = json.loads((out / "config.json").read_text())
        assert snap == {
            key: val for key, val in limit_cfg.as_dict().items()
        }
        # untouched keys appear with their default values
        assert snap["estimate.alpha"] == 0.25
        assert snap["continuation.tol"] == 1e-9

    def test_limit_artifact_contents(self, limit_run):
        _, out = limit_run
        payload = json.loads((out / "limit.json").read_text())
        assert payload["separates"] is True
        assert payload["mu"] > 0.0
        assert abs(payload["r0"] - 2.0) < 1e-3
        header = (out / "limit.csv").read_text().splitlines()[0]
        assert header == "rho,w"

    def test_profiles_pipeline(self, tmp_path):
        cfg = parse_config(FAST_PROFILE)
        result = run_pipeline(cfg, "profiles", out_dir=tmp_path)
        assert result["passed"] is True
        meta = json.loads((tmp_path / "profiles.json").read_text())
        assert abs(meta["A"] - 1.8868) < 1e-3
        assert meta["W_residual"] <= 1e-9

    def test_continuation_pipeline(self, tmp_path):
        cfg = parse_config(FAST_LIMIT + "continuation.schedule = 1e4\n")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = run_pipeline(cfg, "continuation", out_dir=tmp_path)
        assert result["passed"] is True
        branch = json.loads((tmp_path / "branch.json").read_text())
        assert branch["truncated"] is False
        assert (tmp_path / "branch_final.csv").exists()
        metrics = json.loads((tmp_path / "continuation.json").read_text())
        assert metrics["points"][0]["newton_iters"] <= 10


class TestManifest:
    def test_every_file_listed_with_correct_hash(self, limit_run):
        _, out = limit_run
        manifest = json.loads((out / "manifest.json").read_text())
        on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
        assert set(manifest["files"]) == on_disk
        for name, digest in manifest["files"].items():
            blob = (out / name).read_bytes()
            assert hashlib.sha256(blob).hexdigest() == digest

    def test_manifest_metadata(self, limit_run):
        _, out = limit_run
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["pipeline"] == "limit"
        assert manifest["status"] == "pass"
        assert manifest["wall_seconds"] >= 0.0
        for lib in ("numpy", "scipy", "seglab", "python"):
            assert manifest["versions"][lib]

    def test_repeat_runs_byte_identical_outside_manifest(
        self, limit_cfg, limit_run, tmp_path
    ):
        _, first = limit_run
        run_pipeline(limit_cfg, "limit", out_dir=tmp_path)
        for p in sorted(first.iterdir()):
            if p.name == "manifest.json":
                continue
            assert (tmp_path / p.name).read_bytes() == p.read_bytes()
        m1 = json.loads((first / "manifest.json").read_text())
        m2 = json.loads((tmp_path / "manifest.json").read_text())
        m1.pop("wall_seconds")
        m2.pop("wall_seconds")
        assert m1 == m2


class TestFailureHandling:
    def test_unknown_pipeline_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown pipeline"):
            run_pipeline(RunConfig(), "polish", out_dir=tmp_path)

    def test_partial_artifacts_on_crash(self, tmp_path, monkeypatch):
        def boom(cfg, art):
            art.write_json("stage.json", {"step": 1})
            raise ValueError("solver exploded")

        monkeypatch.setitem(pipelines.PIPELINES, "limit", boom)
        with pytest.raises(PipelineError, match="limit.*solver exploded"):
            run_pipeline(RunConfig(), "limit", out_dir=tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert names == {"config.json.partial", "stage.json.partial"}

    def test_pipeline_error_names_cause(self, tmp_path):
        cfg = parse_config(FAST_LIMIT + "layer.eps_list = 0.1, 0.08\n")
        with pytest.raises(PipelineError, match="estimate") as err:
            run_pipeline(cfg, "estimate", out_dir=tmp_path)
        assert "eps" in str(err.value)
        assert (tmp_path / "config.json.partial").exists()


class TestCli:
    def test_invalid_verb_exits_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["polish"])
        assert exc.value.code == 2

    def test_missing_config_file(self, tmp_path):
        rc = main(["limit", "--config", str(tmp_path / "nope.cfg"),
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_invalid_config_file(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("geometry.R = 2.0\ngeometry.R = 3.0\n")
        rc = main(["limit", "--config", str(path),
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_bad_eps_list_flag(self, tmp_path):
        rc = main(["limit", "--eps-list", "0.1,donut",
                   "--out", str(tmp_path)])
        assert rc == 2
        rc = main(["limit", "--eps-list", "0.9", "--out", str(tmp_path)])
        assert rc == 2

    def test_bad_threads_flag(self, tmp_path):
        rc = main(["limit", "--threads", "0", "--out", str(tmp_path)])
        assert rc == 2

    def test_limit_verb_passes(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(FAST_LIMIT)
        rc = main(["limit", "--config", str(cfg), "--out", str(tmp_path)])
        assert rc == 0
        assert "limit: PASS" in capsys.readouterr().out

    def test_seed_override_reaches_manifest(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(FAST_LIMIT)
        rc = main(["limit", "--config", str(cfg), "--out", str(tmp_path),
                   "--seed", "9"])
        assert rc == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 9
        snap = json.loads((tmp_path / "config.json").read_text())
        assert snap["estimate.seed"] == 9

    def test_pipeline_failure_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(FAST_LIMIT)
        rc = main(["estimate", "--config", str(cfg), "--out",
                   str(tmp_path), "--eps-list", "0.1,0.09,0.08"])
        assert rc == 1
        assert "failed" in capsys.readouterr().err
