import datetime as dt
import json

import pytest

from earncast.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_synth")
    rc = main(["synth", "--n", "80", "--seed", "2", "--out", str(out)])
    assert rc == EXIT_OK
    return out


def fast_config(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"train": {"mlp": {"epochs": 25, "patience": 5}}}))
    return cfg


class TestValidate:
    def test_clean_dataset(self, synth_dir, capsys):
        rc = main(["validate", str(synth_dir / "manifest.json")])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "80 instances" in out

    def test_corrupted_embedding_is_data_error(self, synth_dir, tmp_path, capsys):
        import shutil

        broken = tmp_path / "broken"
        shutil.copytree(synth_dir, broken)
        target = sorted((broken / "embeddings").glob("*_text.emb"))[0]
        target.write_bytes(b"BADMAGIC" + bytes(24))
        rc = main(["validate", str(broken / "manifest.json")])
        assert rc == EXIT_DATA
        assert "magic" in capsys.readouterr().err

    def test_future_dated_instance_warns(self, tmp_path, capsys):
        (tmp_path / "texts").mkdir()
        (tmp_path / "texts" / "t.txt").write_text("hello")
        market = {
            "companies": {"ZZ": [
                {"date": "2023-01-02", "open": 10, "close": 11, "volume": 1},
            ]},
            "index": [{"date": "2023-01-02", "open": 10, "close": 11, "volume": 1}],
            "gdp_growth": [],
            "inflation_rate": [],
        }
        (tmp_path / "market.json").write_text(json.dumps(market))
        manifest = {
            "version": "1",
            "market_ref": "market.json",
            "companies": [{"company_id": "ZZ"}],
            "instances": [{
                "company_id": "ZZ", "call_date": "2024-05-05",
                "transcript_ref": "texts/t.txt", "image_embedding_refs": [],
                "open_d": 10.0, "open_d1": 11.0,
            }],
        }
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        rc = main(["validate", str(tmp_path / "manifest.json")])
        assert rc == EXIT_OK
        assert "lookahead" in capsys.readouterr().out

    def test_missing_manifest_is_data_error(self, tmp_path):
        assert main(["validate", str(tmp_path / "none.json")]) == EXIT_DATA


class TestSynth:
    def test_summary_printed(self, synth_dir, capsys):
        # fixture already ran synth; check the dataset again via validate output
        assert (synth_dir / "manifest.json").exists()
        assert (synth_dir / "market.json").exists()

    def test_too_small_n_is_usage_error(self, tmp_path):
        assert main(["synth", "--n", "5", "--out", str(tmp_path)]) == EXIT_USAGE


class TestRun:
    def test_single_variant_writes_reports_and_models(self, synth_dir, tmp_path):
        cfg = fast_config(tmp_path)
        out = tmp_path / "run1"
        rc = main([
            "run", "--manifest", str(synth_dir / "manifest.json"), "--out", str(out),
            "--seed", "7", "--variant", "N_T_P", "--config", str(cfg),
        ])
        assert rc == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert [r["model"] for r in report["rows"]] == ["DL-3"]
        assert (out / "report.txt").exists()
        assert (out / "models" / "N_T_P" / "regressor.ecm").exists()
        assert (out / "models" / "N_T_P" / "text_classifier.ecm").exists()
        assert (out / "models" / "N_T_P" / "schema.json").exists()
        assert report["config"]["seed"] == 7

    def test_rerun_is_byte_identical(self, synth_dir, tmp_path):
        cfg = fast_config(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main([
                "run", "--manifest", str(synth_dir / "manifest.json"), "--out", str(out),
                "--seed", "9", "--variant", "N", "--config", str(cfg),
            ])
            assert rc == EXIT_OK
            outs.append((out / "report.json").read_bytes())
        assert outs[0] == outs[1]

    def test_flag_overrides_config_file(self, synth_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "seed": 1, "variant": "N",
            "train": {"mlp": {"epochs": 10, "patience": 3}},
        }))
        out = tmp_path / "run_override"
        rc = main([
            "run", "--manifest", str(synth_dir / "manifest.json"), "--out", str(out),
            "--seed", "33", "--config", str(cfg), "--variant", "N",
        ])
        assert rc == EXIT_OK
        assert json.loads((out / "report.json").read_text())["config"]["seed"] == 33

    def test_missing_required_is_usage_error(self):
        assert main(["run", "--seed", "3"]) == EXIT_USAGE

    def test_unknown_variant_is_usage_error(self, synth_dir, tmp_path):
        rc = main([
            "run", "--manifest", str(synth_dir / "manifest.json"),
            "--out", str(tmp_path / "x"), "--variant", "AUDIO",
        ])
        assert rc == EXIT_USAGE


class TestReport:
    def test_renders_table(self, synth_dir, tmp_path, capsys):
        cfg = fast_config(tmp_path)
        out = tmp_path / "run_rep"
        main([
            "run", "--manifest", str(synth_dir / "manifest.json"), "--out", str(out),
            "--seed", "4", "--variant", "N", "--config", str(cfg),
        ])
        capsys.readouterr()
        rc = main(["report", str(out / "report.json")])
        assert rc == EXIT_OK
        text = capsys.readouterr().out
        assert text.splitlines()[0].split() == ["Model", "Modalities", "MAE", "RMSE", "MAPE"]
        assert (out / "report.txt").read_text() == text

    def test_missing_report_is_data_error(self, tmp_path):
        assert main(["report", str(tmp_path / "nope.json")]) == EXIT_DATA


def test_unknown_command_is_usage_error():
    assert main(["frobnicate"]) == EXIT_USAGE
