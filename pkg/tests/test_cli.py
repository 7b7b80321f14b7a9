import json
import sys
from pathlib import Path

import pytest

from mmprobe import load_dataset
from mmprobe.cli import main, parse_predictor_spec
from mmprobe.harness import DomainSpec

BRIDGES = Path(__file__).parent / "bridges"


def domain_spec_file(tmp_path, name="d0", seed=0, n=24):
    spec = DomainSpec(
        name=name,
        hate_lexicon={"grim": 2.0, "vile": 2.0},
        benign_lexicon={"soft": -1.0, "warm": -1.0},
        n_samples=n,
        seed=seed,
    )
    path = tmp_path / f"{name}.spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    return path


def gen_dataset(tmp_path, name="d0", seed=0, n=24):
    spec_path = domain_spec_file(tmp_path, name, seed, n)
    out = tmp_path / f"{name}.jsonl"
    assert main(["gen", "--spec", str(spec_path), "--out", str(out)]) == 0
    return out


def snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file()}


def lexicon_file(tmp_path, lex=None):
    path = tmp_path / "lex.json"
    path.write_text(json.dumps(lex or {"grim": 2.0, "vile": 2.0, "soft": -1.0, "warm": -1.0}))
    return path


class TestHelp:
    @pytest.mark.parametrize("cmd", [
        [], ["gen"], ["shapley"], ["matrix"], ["caption-effect"], ["confounder"],
        ["train"], ["eval"], ["agreement"], ["bridge-check"],
    ])
    def test_help_exits_zero(self, capsys, cmd):
        assert main(cmd + ["--help"]) == 0
        out = capsys.readouterr().out
        assert "--" in out

    def test_shapley_help_lists_flags_with_defaults(self, capsys):
        main(["shapley", "--help"])
        out = capsys.readouterr().out
        for flag in ("--dataset", "--predictor", "--mode", "--samples", "--seed",
                     "--policy", "--out", "--cap", "--workers"):
            assert flag in out
        assert "default" in out

    def test_missing_required_flag_is_usage_error(self, capsys):
        assert main(["shapley", "--out", "x"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 2


class TestGen:
    def test_round_trip(self, tmp_path):
        out = gen_dataset(tmp_path)
        ds = load_dataset(out)
        assert len(ds) == 24
        assert {m.label for m in ds} == {0, 1}

    def test_manifest_written(self, tmp_path):
        gen_dataset(tmp_path)
        manifests = list(tmp_path.glob("manifest_*.json"))
        assert len(manifests) == 1
        payload = json.loads(manifests[0].read_text())
        assert payload["command"] == "gen"
        assert payload["tool_version"]

    def test_confounder_generation(self, tmp_path):
        from mmprobe import load_confounders

        out = tmp_path / "groups.jsonl"
        assert main(["gen", "--confounders", "8", "--seed", "2", "--out", str(out)]) == 0
        assert len(load_confounders(out)) == 8


class TestShapleyCmd:
    def test_deterministic_byte_identical(self, tmp_path):
        ds = gen_dataset(tmp_path, n=8)
        lex = lexicon_file(tmp_path)
        out = tmp_path / "run"
        argv = ["shapley", "--dataset", str(ds), "--predictor", f"lexicon:{lex}",
                "--mode", "mc", "--samples", "40", "--seed", "7",
                "--policy", "gray", "--cap", "4", "--out", str(out)]
        assert main(argv) == 0
        first = snapshot(out)
        assert main(argv) == 0
        assert snapshot(out) == first
        assert any(name.startswith("modality_") for name in first)
        assert any(name.startswith("manifest_") for name in first)
        assert any(name.endswith(".ppm") for name in first)

    def test_exact_mode_guard_exits_one(self, tmp_path, capsys):
        from mmprobe import LabeledDataset, Meme, save_dataset
        from conftest import make_image

        big = LabeledDataset("big", (
            Meme(id="m0", text="a b c d e f g", image=make_image(16, 16), label=1),))
        path = tmp_path / "big.jsonl"
        save_dataset(big, path)
        lex = lexicon_file(tmp_path)
        out = tmp_path / "run"
        rc = main(["shapley", "--dataset", str(path), "--predictor", f"lexicon:{lex}",
                   "--mode", "exact", "--out", str(out)])
        assert rc == 1
        assert "TooManyEntities" in capsys.readouterr().err

    def test_manifest_written_before_outputs(self, tmp_path):
        lex = lexicon_file(tmp_path)
        out = tmp_path / "run"
        rc = main(["shapley", "--dataset", str(tmp_path / "missing.jsonl"),
                   "--predictor", f"lexicon:{lex}", "--out", str(out)])
        assert rc == 1
        assert list(out.glob("manifest_*.json"))  # manifest precedes any result
        assert not list(out.glob("modality_*.json"))


class TestMatrixCmd:
    def test_deterministic_byte_identical(self, tmp_path):
        a = gen_dataset(tmp_path, "a", seed=0, n=40)
        b = gen_dataset(tmp_path, "b", seed=1, n=40)
        out = tmp_path / "m"
        argv = ["matrix", "--datasets", f"{a},{b}", "--seed", "1",
                "--epochs", "30", "--out", str(out)]
        assert main(argv) == 0
        first = snapshot(out)
        assert main(argv) == 0
        assert snapshot(out) == first
        csvs = [n for n in first if n.endswith(".csv")]
        assert len(csvs) == 1
        text = first[csvs[0]].decode()
        assert text.startswith("train\\test,a,b")


class TestCaptionEffectCmd:
    def test_writes_four_matrices_and_summary(self, tmp_path):
        a = gen_dataset(tmp_path, "a", seed=0, n=32)
        b = gen_dataset(tmp_path, "b", seed=1, n=32)
        out = tmp_path / "ce"
        assert main(["caption-effect", "--datasets", f"{a},{b}", "--seed", "2",
                     "--epochs", "15", "--out", str(out)]) == 0
        csvs = sorted(p.name for p in out.glob("matrix_*.csv"))
        assert len(csvs) == 4
        summary = json.loads(next(out.glob("caption_effect_*.json")).read_text())
        assert set(summary["conditions"]) == {"off", "train", "test", "both"}
        assert summary["delta_vs_off"]["off"] == [[0.0, 0.0], [0.0, 0.0]]


class TestConfounderCmd:
    def test_end_to_end_via_gen(self, tmp_path, capsys):
        groups = tmp_path / "groups.jsonl"
        assert main(["gen", "--confounders", "10", "--seed", "1",
                     "--out", str(groups)]) == 0
        lex = lexicon_file(tmp_path, {"vermin": 2.0, "plague": 2.0, "filth": 2.0,
                                      "picnic": -1.0, "garden": -1.0, "sunny": -1.0})
        out = tmp_path / "conf"
        assert main(["confounder", "--groups", str(groups), "--predictor",
                     f"lexicon:{lex}", "--out", str(out)]) == 0
        report = json.loads(next(out.glob("confounder_*.json")).read_text())
        assert set(report["sets"]) == {"T", "I", "T_plus", "I_plus"}
        assert report["delta_f1_T_vs_I"] > 0
        assert "delta F1" in capsys.readouterr().out


class TestTrainEval:
    def test_train_then_eval_with_model_spec(self, tmp_path):
        ds = gen_dataset(tmp_path, n=40)
        out = tmp_path / "t"
        assert main(["train", "--dataset", str(ds), "--epochs", "60",
                     "--out", str(out)]) == 0
        models = list(out.glob("model_*.json"))
        assert len(models) == 1
        out2 = tmp_path / "e"
        assert main(["eval", "--dataset", str(ds), "--predictor",
                     f"model:{models[0]}", "--out", str(out2)]) == 0
        report = json.loads(next(out2.glob("eval_*.json")).read_text())
        assert {"dataset", "n", "macro_f1", "per_class", "confusion"} <= set(report)
        assert report["macro_f1"] > 0.9  # in-domain, clean data


class TestAgreementCmd:
    def test_perfect_agreement_prints_one(self, tmp_path, capsys):
        csv_path = tmp_path / "ann.csv"
        csv_path.write_text("a,b,a,c\na,b,a,c\n")
        out = tmp_path / "agr"
        assert main(["agreement", "--csv", str(csv_path), "--out", str(out)]) == 0
        assert "alpha 1.0000" in capsys.readouterr().out
        report = json.loads(next(out.glob("agreement_*.json")).read_text())
        assert report["alpha"] == 1.0


class TestBridgeCheckCmd:
    def test_well_behaved_bridge_passes(self, capsys):
        cmd = f"{sys.executable} {BRIDGES / 'echo_bridge.py'}"
        assert main(["bridge-check", "--cmd", cmd]) == 0
        assert "conforms" in capsys.readouterr().out

    def test_out_of_range_bridge_fails(self, capsys):
        cmd = f"{sys.executable} {BRIDGES / 'range_bridge.py'}"
        assert main(["bridge-check", "--cmd", cmd]) == 1
        assert "ScoreOutOfRange" in capsys.readouterr().err

    def test_missing_req_id_bridge_fails(self, capsys):
        cmd = f"{sys.executable} {BRIDGES / 'no_reqid_bridge.py'}"
        assert main(["bridge-check", "--cmd", cmd]) == 1
        assert "MalformedResponse" in capsys.readouterr().err


class TestEnvOverrides:
    def test_env_supplies_default_flag_wins(self, tmp_path, monkeypatch):
        spec_path = domain_spec_file(tmp_path, "envd", seed=0)
        out = tmp_path / "envd.jsonl"
        monkeypatch.setenv("PROBE_OUT", str(out))
        assert main(["gen", "--spec", str(spec_path)]) == 0
        assert out.exists()
        out2 = tmp_path / "flagged.jsonl"
        assert main(["gen", "--spec", str(spec_path), "--out", str(out2)]) == 0
        assert out2.exists()

    def test_env_seed_recorded_in_manifest(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PROBE_SEED", "9")
        out = tmp_path / "g.jsonl"
        assert main(["gen", "--confounders", "2", "--out", str(out)]) == 0
        manifest = json.loads(next(tmp_path.glob("manifest_*.json")).read_text())
        assert manifest["flags"]["seed"] == 9


class TestPredictorSpecParsing:
    def test_all_kinds(self, tmp_path):
        lex = lexicon_file(tmp_path)
        assert parse_predictor_spec(f"lexicon:{lex}").lexicon["grim"] == 2.0
        assert parse_predictor_spec("patchint:100").dark_threshold == 100.0
        fused = parse_predictor_spec(f"fusion:0.7:patchint:90:lexicon:{lex}")
        assert fused.alpha == 0.7
        assert fused.text_handle.dark_threshold == 90.0

    def test_bad_specs_are_usage_errors(self, tmp_path, capsys):
        ds = gen_dataset(tmp_path, n=8)
        rc = main(["eval", "--dataset", str(ds), "--predictor", "bogus:x",
                   "--out", str(tmp_path / "e")])
        assert rc == 2
        assert "usage error" in capsys.readouterr().err

    def test_fusion_requires_simple_first_component(self):
        from mmprobe.cli import CLIUsageError

        with pytest.raises(CLIUsageError):
            parse_predictor_spec("fusion:0.5:external:cmd with args:patchint:90")
