import csv
import hashlib
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from drydown import synth
from drydown.cli import main


@pytest.fixture(scope="module")
def small_campaign(tmp_path_factory):
    """A small but complete synthetic campaign on disk."""
    directory = tmp_path_factory.mktemp("campaign")
    synth.write_synthetic(
        synth.SynthConfig(seed=42, n_genotypes=4, n_days=12), directory
    )
    return directory


def _digest(directory):
    out = {}
    for path in sorted(Path(directory).iterdir()):
        out[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def run(args, **kwargs):
    return CliRunner().invoke(main, args, catch_exceptions=False, **kwargs)


def test_synth_writes_all_inputs(tmp_path):
    result = run(["synth", "--seed", "1", "--out", str(tmp_path)])
    assert result.exit_code == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"features.csv", "manual_areas.csv", "weights.csv",
                     "ground_truth.json"}


def test_synth_deterministic(tmp_path):
    run(["synth", "--seed", "9", "--out", str(tmp_path / "a")])
    run(["synth", "--seed", "9", "--out", str(tmp_path / "b")])
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_ingest_ok(small_campaign, tmp_path):
    result = run(["ingest", "--in", str(small_campaign), "--out", str(tmp_path)])
    assert result.exit_code == 0
    assert (tmp_path / "validation_report.txt").exists()
    assert (tmp_path / "validation_report.json").exists()


def test_ingest_missing_column_exits_1(tmp_path):
    src = tmp_path / "in"
    synth.write_synthetic(synth.SynthConfig(seed=0, n_genotypes=1, n_days=5), src)
    text = (src / "features.csv").read_text()
    lines = text.splitlines()
    header = lines[0].split(",")
    drop = header.index("hull_area")
    trimmed = "\n".join(
        ",".join(v for i, v in enumerate(line.split(",")) if i != drop)
        for line in lines
    )
    (src / "features.csv").write_text(trimmed + "\n")
    result = run(["ingest", "--in", str(src), "--out", str(tmp_path / "out")])
    assert result.exit_code == 1
    assert "hull_area" in result.output


def test_fit_area_and_predict(small_campaign, tmp_path):
    model_path = tmp_path / "model.json"
    result = run(["fit-area", "--in", str(small_campaign),
                  "--scope", "global", "--out", str(model_path)])
    assert result.exit_code == 0
    predictions = tmp_path / "predictions.csv"
    result = run(["predict", "--model", str(model_path),
                  "--features", str(small_campaign / "features.csv"),
                  "--out", str(predictions)])
    assert result.exit_code == 0
    with open(predictions, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 48 * 12
    assert set(rows[0]) == {"experiment", "pot", "genotype", "treatment",
                            "day", "raw_area"}
    float(rows[0]["raw_area"])  # parseable


def test_fit_area_genotype_scope_fails_on_tiny_group(tmp_path):
    src = tmp_path / "in"
    # 2 manual records per plant and only 1 control + 1 stressed replicate:
    # 4 aligned pairs cannot support a 4-predictor linear fit
    synth.write_synthetic(
        synth.SynthConfig(seed=0, n_genotypes=1, n_days=5, manual_every=4,
                          replicates_control=1, replicates_stressed=1),
        src,
    )
    result = run(["fit-area", "--in", str(src), "--scope", "genotype",
                  "--out", str(tmp_path / "model.json")])
    assert result.exit_code == 1
    assert "G01" in result.output


def test_smooth_and_water(small_campaign, tmp_path):
    model_path = tmp_path / "model.json"
    run(["fit-area", "--in", str(small_campaign), "--out", str(model_path)])
    predictions = tmp_path / "predictions.csv"
    run(["predict", "--model", str(model_path),
         "--features", str(small_campaign / "features.csv"),
         "--out", str(predictions)])

    curves = tmp_path / "curves.csv"
    plot_dir = tmp_path / "figs"
    result = run(["smooth", "--in", str(predictions), "--out", str(curves),
                  "--plot-dir", str(plot_dir)])
    assert result.exit_code == 0
    with open(curves, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert set(rows[0]) == {"experiment", "pot", "day", "raw", "smoothed",
                            "monotone", "rate"}
    per_plant = {}
    for row in rows:
        per_plant.setdefault(row["pot"], []).append(float(row["monotone"]))
    for series in per_plant.values():
        assert all(b >= a - 1e-9 for a, b in zip(series, series[1:]))
    assert len(list(plot_dir.glob("fig3_*.svg"))) == 48

    water = tmp_path / "water.csv"
    result = run(["water", "--weights", str(small_campaign / "weights.csv"),
                  "--out", str(water)])
    assert result.exit_code == 0
    with open(water, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert set(rows[0]) == {"experiment", "pot", "day", "weight",
                            "transpiration", "atsw", "ftsw", "ttsw"}
    assert all(0.0 <= float(r["ftsw"]) <= 1.0 for r in rows)


def test_evaluate_table_headers(small_campaign, tmp_path):
    result = run(["evaluate", "--in", str(small_campaign),
                  "--out", str(tmp_path), "--no-nn"])
    assert result.exit_code == 0
    header = (tmp_path / "table1.csv").read_text().splitlines()[0]
    assert header == "method,n,rmse,rmse_rel,bias,efficiency"
    header2 = (tmp_path / "table2.csv").read_text().splitlines()[0]
    assert header2 == "scope,n,rmse,rmse_rel,bias,efficiency"
    with open(tmp_path / "table1.csv", newline="") as handle:
        methods = [row["method"] for row in csv.DictReader(handle)]
    assert methods == ["area_lm", "area_splines"]
    assert (tmp_path / "fig4.svg").exists()


def test_fit_response_and_compare(small_campaign, tmp_path):
    image = tmp_path / "image.csv"
    manual = tmp_path / "manual.csv"
    assert run(["fit-response", "--in", str(small_campaign), "--method", "image",
                "--out", str(image)]).exit_code == 0
    assert run(["fit-response", "--in", str(small_campaign), "--method", "manual",
                "--out", str(manual)]).exit_code == 0
    result = run(["compare", "--a", str(manual), "--b", str(image),
                  "--out", str(tmp_path)])
    assert result.exit_code == 0
    payload = json.loads((tmp_path / "comparison.json").read_text())
    assert [c["process"] for c in payload] == ["LE", "TR"]
    assert (tmp_path / "fig5.svg").exists()


def test_report_artifact_contract(small_campaign, tmp_path):
    result = run(["report", "--in", str(small_campaign), "--out", str(tmp_path),
                  "--no-nn", "--curve-plots", "2"])
    assert result.exit_code == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"table1.csv", "table2.csv", "table3.csv", "fig4.svg", "fig5.svg",
            "report.json"} <= names
    assert len([n for n in names if n.startswith("fig3_")]) == 2
    payload = json.loads((tmp_path / "report.json").read_text())
    assert {"table1", "table2", "method_comparison", "validation"} <= set(payload)


def test_report_does_not_mutate_inputs(small_campaign, tmp_path):
    before = _digest(small_campaign)
    run(["report", "--in", str(small_campaign), "--out", str(tmp_path), "--no-nn"])
    assert _digest(small_campaign) == before


def test_config_file_supplies_defaults(tmp_path):
    config = tmp_path / "drydown.conf"
    config.write_text("seed = 5\nout = " + str(tmp_path / "gen") + "\n")
    result = run(["--config", str(config), "synth"])
    assert result.exit_code == 0
    assert (tmp_path / "gen" / "features.csv").exists()
    direct = tmp_path / "direct"
    run(["synth", "--seed", "5", "--out", str(direct)])
    assert _digest(tmp_path / "gen") == _digest(direct)


def test_env_var_default_output(tmp_path, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("DRYDOWN_OUT", str(target))
    result = run(["synth", "--seed", "3"])
    assert result.exit_code == 0
    assert (target / "features.csv").exists()


def test_usage_error_exits_2():
    result = run(["evaluate"])  # missing required --in
    assert result.exit_code == 2
    result = run(["no-such-command"])
    assert result.exit_code == 2
