"""Command-line entry point.

Exit codes: 0 on success, 1 on validation/computation failure (with a
diagnostic naming the offending file/row/column where known), 2 on usage
errors. A plain-text key=value config file can pre-set any flag; explicit
flags win. The DRYDOWN_OUT environment variable supplies the default output
directory.
"""

from __future__ import annotations

import csv
import functools
import json
import os
import sys
from datetime import date
from pathlib import Path

import click
import numpy as np

from . import __version__, area_model, dataset, evaluation, pipeline, response_fit, smoothing, synth, water_balance
from .errors import DrydownError


def _load_config_file(ctx, param, value):
    if not value:
        return value
    defaults = {}
    for line_no, line in enumerate(Path(value).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.BadParameter(f"line {line_no}: expected key=value, got {line!r}")
        key, _, val = line.partition("=")
        defaults[key.strip().replace("-", "_")] = val.strip()
    ctx.default_map = ctx.default_map or {}
    for command in (ctx.command.commands if hasattr(ctx.command, "commands") else {}):
        ctx.default_map.setdefault(command, {}).update(defaults)
    return value


def fallible(func):
    """Translate domain errors into exit code 1 with a plain diagnostic."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except DrydownError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(1)
    return wrapper


def _default_out():
    return os.environ.get("DRYDOWN_OUT", ".")


def _parse_lambda(value):
    if value is None or str(value).lower() in ("auto", ""):
        return smoothing.AUTO
    return float(value)


@click.group()
@click.version_option(__version__)
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              callback=_load_config_file, expose_value=False, is_eager=True,
              help="key=value file supplying default flag values.")
def main():
    """Leaf-area prediction and drought-response analysis for dry-down trials."""


@main.command("synth")
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=_default_out)
@click.option("--genotypes", type=int, default=8, show_default=True)
@click.option("--days", type=int, default=14, show_default=True)
@click.option("--control-reps", type=int, default=4, show_default=True)
@click.option("--stressed-reps", type=int, default=8, show_default=True)
@click.option("--feature-noise", type=float, default=synth.SynthConfig.feature_noise, show_default=True)
@click.option("--manual-noise", type=float, default=synth.SynthConfig.manual_noise, show_default=True)
@click.option("--weight-noise", type=float, default=synth.SynthConfig.weight_noise, show_default=True)
@fallible
def synth_cmd(seed, out, genotypes, days, control_reps, stressed_reps,
              feature_noise, manual_noise, weight_noise):
    """Generate a synthetic campaign with known ground truth."""
    config = synth.SynthConfig(
        seed=seed, n_genotypes=genotypes, n_days=days,
        replicates_control=control_reps, replicates_stressed=stressed_reps,
        feature_noise=feature_noise, manual_noise=manual_noise,
        weight_noise=weight_noise,
    )
    synth.write_synthetic(config, out)
    click.echo(f"wrote features.csv, manual_areas.csv, weights.csv, ground_truth.json to {out}")


@main.command()
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default=_default_out)
@fallible
def ingest(in_dir, out):
    """Parse and validate the three input CSVs; write a validation report."""
    experiment = dataset.load_experiment(in_dir)
    report = dataset.validate_experiment(experiment)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dataset.write_validation_report(
        report, out / "validation_report.txt", out / "validation_report.json"
    )
    click.echo(report.to_text())
    if not report.ok:
        sys.exit(1)


@main.command("fit-area")
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--scope", type=click.Choice(["global", "treatment", "genotype", "mlp"]),
              default="global", show_default=True)
@click.option("--predictors", default=",".join(dataset.MANDATORY_FEATURES), show_default=True)
@click.option("--window", type=float, default=0.5, show_default=True,
              help="alignment window, days")
@click.option("--seed", type=int, default=0, show_default=True, help="MLP seed")
@click.option("--out", type=click.Path(dir_okay=False), default="model.json", show_default=True)
@fallible
def fit_area(in_dir, scope, predictors, window, seed, out):
    """Fit a leaf-area model on aligned image/manual observations."""
    experiment = dataset.load_experiment(in_dir)
    alignment = dataset.align_observations(experiment.features, experiment.manual, window)
    if scope == "mlp":
        model = area_model.fit_mlp(alignment.pairs, area_model.MlpConfig(seed=seed))
    else:
        model = area_model.fit_scoped(
            alignment.pairs, area_model.ModelScope(scope),
            [p.strip() for p in predictors.split(",") if p.strip()],
        )
    area_model.save_model(model, out)
    click.echo(f"fitted on {alignment.n_pairs} pairs ({alignment.n_dropped} manual "
               f"records unmatched); model written to {out}")


PREDICTION_COLUMNS = ("experiment", "pot", "genotype", "treatment", "day", "raw_area")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--features", "features_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default="predictions.csv", show_default=True)
@fallible
def predict(model_path, features_path, out):
    """Predict per-plant daily areas from a features CSV (raw, unclamped)."""
    model = area_model.load_model(model_path)
    records = dataset.parse_features(features_path)
    start = min(r.time.date() for r in records)

    def apply(record):
        if isinstance(model, area_model.MlpAreaModel):
            return area_model.predict_mlp(model, record)
        if isinstance(model, area_model.ScopedModelSet):
            return area_model.predict_linear(model.model_for(record.plant), record)
        return area_model.predict_linear(model, record)

    with open(out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(PREDICTION_COLUMNS)
        for record in records:
            day = (record.time.date() - start).days
            writer.writerow(
                [record.plant.experiment, record.plant.pot, record.plant.genotype,
                 record.plant.treatment, day, repr(apply(record))]
            )
    click.echo(f"wrote {len(records)} predictions to {out}")


@main.command()
@click.option("--in", "predictions_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--lam", "--lambda", "lam", default="auto", show_default=True,
              help="smoothing strength, or 'auto' for GCV")
@click.option("--out", type=click.Path(dir_okay=False), default="curves.csv", show_default=True)
@click.option("--plot-dir", type=click.Path(file_okay=False), default=None,
              help="write one growth-curve SVG per plant here")
@fallible
def smooth(predictions_path, lam, out, plot_dir):
    """Smooth raw predictions into monotone growth curves and daily rates."""
    lam = _parse_lambda(lam)
    per_plant = {}
    with open(predictions_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            plant = dataset.PlantId(row["experiment"], int(row["pot"]),
                                    row.get("genotype", ""), row.get("treatment", ""))
            per_plant.setdefault(plant, []).append((float(row["day"]), float(row["raw_area"])))

    curves = {}
    for plant, values in sorted(per_plant.items()):
        values.sort()
        days = np.array([v[0] for v in values])
        raw = np.array([v[1] for v in values])
        curves[plant] = smoothing.build_growth_curve(plant, days, raw, lam)

    with open(out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["experiment", "pot", "day", "raw", "smoothed", "monotone", "rate"])
        for plant, curve in curves.items():
            for i, day in enumerate(curve.days):
                rate = repr(float(curve.expansion_rate[i])) if i < len(curve.expansion_rate) else ""
                writer.writerow(
                    [plant.experiment, plant.pot, repr(float(day)),
                     repr(float(curve.raw[i])), repr(float(curve.smoothed[i])),
                     repr(float(curve.monotone[i])), rate]
                )
    if plot_dir:
        from . import plots
        Path(plot_dir).mkdir(parents=True, exist_ok=True)
        for plant, curve in curves.items():
            plots.save_growth_curve(
                curve, Path(plot_dir) / f"fig3_{plant.experiment}-{plant.pot}.svg"
            )
    click.echo(f"wrote {len(curves)} growth curves to {out}")


@main.command()
@click.option("--weights", "weights_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default="water.csv", show_default=True)
@click.option("--endpoint-rule", type=click.Choice([water_balance.MIN_WEIGHT, water_balance.FINAL_WEIGHT]),
              default=water_balance.MIN_WEIGHT, show_default=True)
@click.option("--evaporation", type=float, default=0.0, show_default=True,
              help="constant pot evaporation offset, g/day")
@fallible
def water(weights_path, out, endpoint_rule, evaporation):
    """Derive daily transpiration and FTSW from pot weights."""
    records = dataset.parse_weights(weights_path)
    by_plant = {}
    for record in records:
        by_plant.setdefault(record.plant, []).append(record)

    skipped = []
    with open(out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["experiment", "pot", "day", "weight", "transpiration",
                         "atsw", "ftsw", "ttsw"])
        for plant, plant_records in sorted(by_plant.items()):
            try:
                series = water_balance.compute_water_series(
                    plant_records, endpoint_rule=endpoint_rule,
                    evaporation_per_day=evaporation,
                )
            except DrydownError as err:
                skipped.append(str(err))
                continue
            for status in series.statuses:
                writer.writerow(
                    [plant.experiment, plant.pot, repr(status.day), repr(status.weight),
                     repr(status.transpiration), repr(status.atsw), repr(status.ftsw),
                     repr(series.ttsw)]
                )
    for message in skipped:
        click.echo(f"skipped: {message}", err=True)
    click.echo(f"wrote water balance for {len(by_plant) - len(skipped)} plants to {out}")


@main.command()
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default=_default_out)
@click.option("--cv", type=click.Choice(["none", "loo-plant"]), default="none", show_default=True)
@click.option("--window", type=float, default=0.5, show_default=True)
@click.option("--nn/--no-nn", default=True, show_default=True, help="include the MLP method row")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lam", "--lambda", "lam", default="auto", show_default=True)
@fallible
def evaluate(in_dir, out, cv, window, nn, seed, lam):
    """Method-comparison and scale-comparison tables, plus the scatter figure."""
    experiment = dataset.load_experiment(in_dir)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table1, table2, pairs, spline_pred = _evaluate_tables(
        experiment, cv=None if cv == "none" else cv, window=window,
        include_nn=nn, seed=seed, lam=_parse_lambda(lam),
    )
    evaluation.write_metric_table(table1, out / "table1.csv")
    evaluation.write_metric_table(table2, out / "table2.csv", key_column="scope")
    from . import plots
    observed = [p.observed_area for p, v in zip(pairs, spline_pred) if v is not None]
    predicted = [v for v in spline_pred if v is not None]
    if observed:
        plots.save_scatter(observed, predicted, out / "fig4.svg")
    for name, m in table1 + table2:
        click.echo(f"{name}: n={m.n} rmse={m.rmse:.2f} rmse_rel={m.rmse_rel:.3f} "
                   f"bias={m.bias:.2f} efficiency={m.efficiency:.3f}")


def _evaluate_tables(experiment, cv, window, include_nn, seed, lam):
    alignment = dataset.align_observations(experiment.features, experiment.manual, window)
    pairs = alignment.pairs
    global_set = area_model.fit_scoped(pairs, area_model.ModelScope.GLOBAL)
    lm_pred = [area_model.predict_linear(global_set.models["global"], p.features) for p in pairs]
    predictions = pipeline.raw_predictions(experiment, pipeline.linear_predictor(global_set))
    curves = pipeline.build_curves(experiment, predictions, lam)
    spline_pred = pipeline.curve_predictions_for_pairs(experiment, curves, pairs)

    methods = {"area_lm": lm_pred}
    if include_nn:
        mlp = area_model.fit_mlp(pairs, area_model.MlpConfig(seed=seed))
        nn_pred = []
        for p in pairs:
            try:
                nn_pred.append(area_model.predict_mlp(mlp, p.features))
            except DrydownError:
                nn_pred.append(None)
        methods["area_nn"] = nn_pred
    methods["area_splines"] = spline_pred

    table1 = evaluation.metrics_by_method(pairs, methods)
    table2 = evaluation.metrics_by_scope(pairs, cv=cv)
    return table1, table2, pairs, spline_pred


@main.command("fit-response")
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), default="table3.csv", show_default=True)
@click.option("--method", type=click.Choice(["image", "manual"]), default="image", show_default=True)
@click.option("--lam", "--lambda", "lam", default="auto", show_default=True)
@click.option("--endpoint-rule", type=click.Choice([water_balance.MIN_WEIGHT, water_balance.FINAL_WEIGHT]),
              default=water_balance.MIN_WEIGHT, show_default=True)
@click.option("--evaporation", type=float, default=0.0, show_default=True)
@fallible
def fit_response(in_dir, out, method, lam, endpoint_rule, evaporation):
    """Estimate the LE/TR threshold parameter per genotype."""
    experiment = dataset.load_experiment(in_dir)
    lam = _parse_lambda(lam)
    if method == "image":
        result = pipeline.run_image_pipeline(
            experiment, lam=lam, endpoint_rule=endpoint_rule,
            evaporation_per_day=evaporation,
        )
    else:
        result = pipeline.run_manual_pipeline(
            experiment, lam=lam, endpoint_rule=endpoint_rule,
            evaporation_per_day=evaporation,
        )
    fit_result = response_fit.fit_all(result.points)
    response_fit.write_response_table(fit_result.fits, out)
    for process, genotype, reason in fit_result.skipped:
        click.echo(f"skipped {process}/{genotype}: {reason}", err=True)
    click.echo(f"wrote {len(fit_result.fits)} parameter fits to {out}")


@main.command()
@click.option("--a", "path_a", type=click.Path(exists=True, dir_okay=False), required=True,
              help="table3-shaped CSV, method A (x axis)")
@click.option("--b", "path_b", type=click.Path(exists=True, dir_okay=False), required=True,
              help="table3-shaped CSV, method B (y axis)")
@click.option("--out", type=click.Path(file_okay=False), default=_default_out)
@fallible
def compare(path_a, path_b, out):
    """Correlate two parameter sets (e.g. manual vs image estimation)."""
    fits_a = response_fit.read_response_table(path_a)
    fits_b = response_fit.read_response_table(path_b)
    comparisons = response_fit.compare_methods(fits_a, fits_b)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    payload = [c.to_json_dict() for c in comparisons]
    (out / "comparison.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    from . import plots
    plots.save_method_comparison(comparisons, out / "fig5.svg")
    for c in comparisons:
        click.echo(f"{c.process}: R={c.r:.3f} mean_difference={c.mean_difference:.3f} "
                   f"loo_r_min={c.loo_r_min:.3f} flagged={c.flagged_genotype}")


@main.command()
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default=_default_out)
@click.option("--cv", type=click.Choice(["none", "loo-plant"]), default="none", show_default=True)
@click.option("--nn/--no-nn", default=True, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lam", "--lambda", "lam", default="auto", show_default=True)
@click.option("--curve-plots", type=int, default=4, show_default=True,
              help="number of per-plant growth-curve figures")
@fallible
def report(in_dir, out, cv, nn, seed, lam, curve_plots):
    """Run the full pipeline and emit every table and figure."""
    from . import plots

    experiment = dataset.load_experiment(in_dir)
    lam = _parse_lambda(lam)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    validation = dataset.validate_experiment(experiment)

    table1, table2, pairs, spline_pred = _evaluate_tables(
        experiment, cv=None if cv == "none" else cv, window=0.5,
        include_nn=nn, seed=seed, lam=lam,
    )
    evaluation.write_metric_table(table1, out / "table1.csv")
    evaluation.write_metric_table(table2, out / "table2.csv", key_column="scope")

    observed = [p.observed_area for p, v in zip(pairs, spline_pred) if v is not None]
    predicted = [v for v in spline_pred if v is not None]
    plots.save_scatter(observed, predicted, out / "fig4.svg")

    image = pipeline.run_image_pipeline(experiment, lam=lam)
    manual = pipeline.run_manual_pipeline(experiment, lam=lam)
    image_fits = response_fit.fit_all(image.points)
    manual_fits = response_fit.fit_all(manual.points)
    response_fit.write_response_table(image_fits.fits, out / "table3.csv")

    stressed_keys = sorted(k for k in image.curves if k in image.water)
    for key in stressed_keys[:curve_plots]:
        curve = image.curves[key]
        plots.save_growth_curve(curve, out / f"fig3_{key[0]}-{key[1]}.svg")

    comparisons = response_fit.compare_methods(manual_fits.fits, image_fits.fits)
    plots.save_method_comparison(comparisons, out / "fig5.svg")

    payload = {
        "experiment": experiment.id,
        "period": [experiment.start.isoformat(), experiment.end.isoformat()],
        "validation": validation.to_json_dict(),
        "alignment": {"pairs": len(pairs), "dropped": image.alignment.n_dropped},
        "table1": [
            {"method": name, "n": m.n, "rmse": m.rmse, "rmse_rel": m.rmse_rel,
             "bias": m.bias, "efficiency": m.efficiency}
            for name, m in table1
        ],
        "table2": [
            {"scope": name, "n": m.n, "rmse": m.rmse, "rmse_rel": m.rmse_rel,
             "bias": m.bias, "efficiency": m.efficiency}
            for name, m in table2
        ],
        "response_fits": len(image_fits.fits),
        "response_skipped": [
            {"process": p, "genotype": g, "reason": r} for p, g, r in image_fits.skipped
        ],
        "method_comparison": [c.to_json_dict() for c in comparisons],
        "notes": "method A = manual growth curves; method B = image pipeline; "
                 "TR points share the pot-weight transpiration data.",
    }
    (out / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(f"report written to {out}")


if __name__ == "__main__":
    main()
