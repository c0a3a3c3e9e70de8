import json

import pytest

from vrpipe.cli import RunSpec, UsageError, main, parse_features


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "s.vrsc"
    assert main(["synth", "--kind", "layered", "--layers", "12", "--per-layer", "4", "--opacity", "0.5",
                 "--seed", "7", "--width", "32", "--height", "32", "-o", str(path)]) == 0
    return path


def test_feature_parsing():
    assert [s.feature for s in parse_features("base,het,qm,het+qm,multipass:3")] == \
        ["base", "het", "qm", "het+qm", "multipass:3"]
    assert RunSpec.parse("het+qm").het and RunSpec.parse("het+qm").qm
    for bad in ("fast", "multipass:0", "multipass:x", "base,base"):
        with pytest.raises(UsageError):
            parse_features(bad)


def test_synth_deterministic(tmp_path, scene_file):
    again = tmp_path / "again.vrsc"
    main(["synth", "--kind", "layered", "--layers", "12", "--per-layer", "4", "--opacity", "0.5",
          "--seed", "7", "--width", "32", "--height", "32", "-o", str(again)])
    assert again.read_bytes() == scene_file.read_bytes()


def test_synth_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("VRPIPE_SEED", "5")
    main(["synth", "--kind", "random", "--count", "10", "-o", str(tmp_path / "a.vrsc")])
    main(["synth", "--kind", "random", "--count", "10", "--seed", "5", "-o", str(tmp_path / "b.vrsc")])
    assert (tmp_path / "a.vrsc").read_bytes() == (tmp_path / "b.vrsc").read_bytes()


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth"])
    assert exc.value.code == 2
    assert main(["synth", "--layers", "0", "-o", str(tmp_path / "x")]) == 2


def test_io_errors(tmp_path, scene_file, capsys):
    assert main(["render", "--scene", str(tmp_path / "missing.vrsc"), "-o", str(tmp_path / "r")]) == 3
    (tmp_path / "cam.json").write_text(json.dumps({"view": [0] * 16}))
    assert main(["render", "--scene", str(scene_file), "--camera", str(tmp_path / "cam.json"),
                 "-o", str(tmp_path / "r")]) == 3
    assert "'fx'" in capsys.readouterr().err


def test_render_simulate_compare(tmp_path, scene_file, capsys):
    out = tmp_path / "ref"
    assert main(["render", "--scene", str(scene_file), "--width", "32", "--height", "32", "--no-et", "-o", str(out)]) == 0
    assert main(["render", "--scene", str(scene_file), "--width", "32", "--height", "32", "--et",
                 "-o", str(tmp_path / "refet")]) == 0
    counters = json.loads((tmp_path / "refet.counters.json").read_text())
    assert counters["et_reduction_ratio"] > 1
    sim = tmp_path / "sim"
    assert main(["simulate", "--scene", str(scene_file), "--width", "32", "--height", "32",
                 "--features", "base,het+qm,multipass:4", "-o", str(sim)]) == 0
    capsys.readouterr()
    assert main(["compare", f"{out}.pfm", f"{sim}.base.pfm"]) == 0
    assert json.loads(capsys.readouterr().out)["max_abs"] == 0.0
    assert main(["compare", f"{out}.pfm", f"{sim}.het_qm.pfm", "--tolerance", "1e-9"]) == 1
    capsys.readouterr()
    report = json.loads((tmp_path / "sim.het_qm.report.json").read_text())
    assert report["totals"]["quads_merged"] > 0
    mp = json.loads((tmp_path / "sim.multipass4.report.json").read_text())
    assert len(mp["metadata"]["draws"]) == 7
    assert main(["compare", f"{sim}.base.report.json", f"{sim}.het_qm.report.json"]) == 0
    table = json.loads(capsys.readouterr().out)
    base = json.loads((tmp_path / "sim.base.report.json").read_text())["totals"]
    assert table["fragment_reduction"] == base["fragments_blended"] / report["totals"]["fragments_blended"]


def test_simulate_outputs_reproducible(tmp_path, scene_file):
    for tag in ("a", "b"):
        assert main(["simulate", "--scene", str(scene_file), "--width", "32", "--height", "32",
                     "--features", "het", "-o", str(tmp_path / tag)]) == 0
    for suffix in ("het.stats.json", "het.report.json", "het.pfm", "het.ppm"):
        assert (tmp_path / f"a.{suffix}").read_bytes() == (tmp_path / f"b.{suffix}").read_bytes()


def test_simulate_bad_config(tmp_path, scene_file):
    (tmp_path / "cfg.json").write_text(json.dumps({"tc_bins": 0}))
    assert main(["simulate", "--scene", str(scene_file), "--config", str(tmp_path / "cfg.json"),
                 "-o", str(tmp_path / "x")]) == 4
