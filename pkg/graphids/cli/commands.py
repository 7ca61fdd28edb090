# graphids/cli/commands.py - extract, train, evaluate, pipeline and synthesize commands
import functools
import os
from typing import Any, Dict, List, Optional

import click
from flask import current_app
from joblib import Parallel, delayed

from . import bp
from .runconfig import RunConfig, check_policy, check_sigma, file_digest
from ..errors import ConfigError, GraphIdsError
from ..extensions import logger
from ..services.graph import WeightPolicy, populate, write_edge_list
from ..services.ingest import (
    ConnectionDataset,
    class_distribution,
    load_connections,
    serialize_connections,
    split_train_test,
    undersample_benign,
)
from ..services.learner import load_model, save_model
from ..services.modelsel import CellResult, TrainingPlan, evaluate, run_training
from ..services.pipeline import BlockSchedule, DerivedDataset, generate, read_derived, write_derived
from ..services.reports import (
    comparison_document,
    comparison_text,
    evaluation_report_text,
    fn_breakdown_frame,
    generate_comparison_pdf,
    to_json,
    training_report_text,
)
from ..services.synthetic import scanner_corpus


def cli_errors(func):
    """Map configuration problems to usage errors (exit 2), everything else to exit 1"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            logger.error(f"❌ {e.message}")
            raise click.UsageError(e.message)
        except GraphIdsError as e:
            logger.error(f"❌ {e.code}: {e.message}")
            raise click.ClickException(e.message)
        except OSError as e:
            logger.error(f"❌ {e}")
            raise click.ClickException(str(e))

    return wrapper


def _sigma_option(ctx, param, value):
    if value is None:
        return None
    try:
        return check_sigma(value)
    except ConfigError as e:
        raise click.BadParameter(e.message)


def _policy_option(ctx, param, value):
    if value is None:
        return None
    try:
        return check_policy(value)
    except ConfigError as e:
        raise click.BadParameter(e.message)


def mapping_options(func):
    """Column mapping flags shared by commands that read connection tables"""
    options = [
        click.option("--src-column", help="Source address column"),
        click.option("--dst-column", help="Destination address column"),
        click.option("--timestamp-column", help="Timestamp column"),
        click.option("--timestamp-format", help="strftime format of the timestamp column (default: inferred)"),
        click.option("--dayfirst", is_flag=True, default=None, help="Read ambiguous dates as day/month"),
        click.option("--label-column", help="Label column"),
        click.option("--delimiter", help="Field delimiter"),
        click.option("--benign-label", help="Label of benign records (case-insensitive)"),
        click.option("--skip-bad-records", is_flag=True, default=None, help="Skip malformed records"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def common_options(func):
    options = [
        click.option("--seed", type=int, help="Random seed"),
        click.option("-o", "--out", "output_dir", type=click.Path(file_okay=False), default=".",
                     show_default=True, help="Output directory"),
        click.option("--config", "config_file", type=click.Path(dir_okay=False),
                     help="key = value file overriding flags"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run_config(flags: Dict[str, Any], config_file: Optional[str]) -> RunConfig:
    config = RunConfig.build(current_app.config, flags, config_file)
    os.makedirs(config.output_dir, exist_ok=True)
    return config


def _header(config: RunConfig) -> Dict[str, Any]:
    from .. import __version__
    return {"config_digest": config.digest(), "seed": config.seed, "version": __version__}


def _write_text(directory: str, name: str, text: str) -> str:
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    return path


def _load(config: RunConfig) -> ConnectionDataset:
    if not config.inputs:
        raise ConfigError("no input files given")
    return load_connections(list(config.inputs), config.mapping, config.skip_bad_records)


def _generate(d: ConnectionDataset, sigma: str, policy: str, workers: int) -> DerivedDataset:
    app_config = current_app.config
    return generate(
        d,
        BlockSchedule.parse(sigma, len(d)),
        WeightPolicy.parse(policy),
        workers=workers,
        eigen_tol=app_config.get("EIGEN_TOL", 1e-8),
        eigen_max_iter=app_config.get("EIGEN_MAX_ITER", 1000),
    )


def _split(d: ConnectionDataset, derived: DerivedDataset, boundary: str, seed: int):
    """Undersampled train side and full test side of D*, matched to D by position"""
    train, test = split_train_test(d, boundary)
    balanced = undersample_benign(train, seed)
    return balanced, test, derived.take(balanced.positions), derived.take(test.positions)


@bp.cli.command("extract")
@click.argument("inputs", nargs=-1, type=click.Path(dir_okay=False))
@click.option("--sigma", callback=_sigma_option, help="Block size: positive integer or N")
@click.option("--omega", "policy", callback=_policy_option, help="Weight policy: unweighted, weighted or mixed")
@click.option("--boundary", help="Train/test split timestamp; writes train.csv and test.csv")
@click.option("--edge-list", type=click.Path(dir_okay=False), help="Export the final graph as src,dst,weight")
@mapping_options
@common_options
@cli_errors
def extract_command(inputs, config_file, edge_list, **flags):
    """Build the graph-feature dataset D* from connection tables."""
    config = _run_config({"inputs": inputs, **flags}, config_file)
    d = _load(config)
    derived = _generate(d, config.sigma, config.policy, config.workers)

    out = config.output_dir
    write_derived(derived, os.path.join(out, "derived.csv"))
    manifest = {
        **_header(config),
        "sigma": config.sigma,
        "omega": config.policy,
        "inputs": [{"name": os.path.basename(p), "sha256": file_digest(p)} for p in config.inputs],
        "records": len(d),
        "skipped_records": d.skipped,
        "distribution": {"all": class_distribution(d)},
    }

    if config.boundary:
        train, test, train_derived, test_derived = _split(d, derived, config.boundary, config.seed)
        write_derived(train_derived, os.path.join(out, "train.csv"))
        write_derived(test_derived, os.path.join(out, "test.csv"))
        manifest["boundary"] = config.boundary
        manifest["distribution"]["train"] = class_distribution(train, len(d))
        manifest["distribution"]["test"] = class_distribution(test, len(d))

    if edge_list:
        write_edge_list(populate(d, len(d) - 1), edge_list)

    _write_text(out, "manifest.json", to_json(manifest))
    click.echo(f"Wrote {len(derived)} derived records to {out}")


@bp.cli.command("train")
@click.argument("train_file", type=click.Path(dir_okay=False))
@click.option("--c-grid", help="Comma-separated C values")
@click.option("--gamma-grid", help="Comma-separated gamma values")
@click.option("--ffs-cap", type=int, help="Maximum number of selected features")
@click.option("--benign-label", help="Label of benign records (case-insensitive)")
@common_options
@cli_errors
def train_command(train_file, config_file, **flags):
    """Scale, select features, tune, check robustness and fit the final model."""
    config = _run_config(flags, config_file)
    train_set = read_derived(train_file)

    outcome = run_training(train_set, config.training_plan(current_app.config), config.benign_label)
    header = _header(config)

    out = config.output_dir
    save_model(outcome.model, os.path.join(out, "model.npz"))
    _write_text(out, "training_report.json", to_json({**header, **outcome.to_dict()}))
    _write_text(out, "training_report.txt", training_report_text(outcome, header))
    click.echo(f"Model with {outcome.model.n_support} support vectors written to {out}")


@bp.cli.command("evaluate")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.argument("test_file", type=click.Path(dir_okay=False))
@click.option("--benign-label", help="Label of benign records (case-insensitive)")
@common_options
@cli_errors
def evaluate_command(model_file, test_file, config_file, **flags):
    """Score a trained model on a held-out derived dataset."""
    config = _run_config(flags, config_file)
    model = load_model(model_file)
    report = evaluate(model, read_derived(test_file), config.benign_label)
    header = _header(config)

    out = config.output_dir
    _write_text(out, "evaluation.json", to_json({**header, **report.to_dict()}))
    _write_text(out, "evaluation.txt", evaluation_report_text(report, header))
    fn_breakdown_frame(report).to_csv(os.path.join(out, "fn_breakdown.csv"), index=False, lineterminator="\n")
    click.echo(f"weighted F1={report.weighted_f1:.4f} FPR={report.fpr:.4f} FNR={report.fnr:.4f}")


def run_cell(d: ConnectionDataset, sigma: str, policy: str, boundary: str, plan: TrainingPlan,
             benign_label: str, eigen_tol: float, eigen_max_iter: int) -> CellResult:
    """Extract, split, train and evaluate one (sigma, omega) combination"""
    cell = CellResult(sigma=sigma, policy=policy, n_records=len(d))
    try:
        derived = generate(d, BlockSchedule.parse(sigma, len(d)), WeightPolicy.parse(policy),
                           eigen_tol=eigen_tol, eigen_max_iter=eigen_max_iter)
        _, _, train_derived, test_derived = _split(d, derived, boundary, plan.seed)
        cell.training = run_training(train_derived, plan, benign_label)
        cell.evaluation = evaluate(cell.training.model, test_derived, benign_label)
    except GraphIdsError as e:
        logger.error(f"❌ Cell sigma={sigma} omega={policy} failed: {e.message}")
        cell.error = e.message
    else:
        logger.info(f"✅ Cell {cell.label} done: FNR={cell.fnr:.4f} FPR={cell.fpr:.4f}")
    return cell


def _cell_dir(out: str, cell: CellResult) -> str:
    path = os.path.join(out, f"cell-s{cell.sigma}-{WeightPolicy.parse(cell.policy).short}")
    os.makedirs(path, exist_ok=True)
    return path


@bp.cli.command("pipeline")
@click.argument("inputs", nargs=-1, type=click.Path(dir_okay=False))
@click.option("--sigmas", help="Comma-separated block sizes, e.g. 1,5,N")
@click.option("--policies", help="Comma-separated weight policies")
@click.option("--boundary", help="Train/test split timestamp")
@click.option("--c-grid", help="Comma-separated C values")
@click.option("--gamma-grid", help="Comma-separated gamma values")
@click.option("--ffs-cap", type=int, help="Maximum number of selected features")
@click.option("--pdf", is_flag=True, help="Also render comparison.pdf")
@mapping_options
@common_options
@cli_errors
def pipeline_command(inputs, config_file, pdf, **flags):
    """Run extraction, training and evaluation for every (sigma, omega) cell."""
    config = _run_config({"inputs": inputs, **flags}, config_file)
    if not config.boundary:
        raise ConfigError("pipeline needs a split boundary (--boundary)")

    d = _load(config)
    app_config = current_app.config
    cells_wanted = config.cells
    logger.info(f"🚀 Running {len(cells_wanted)} cell(s) with {config.workers} worker(s)")

    # One worker per cell; inner stages stay sequential
    plan = config.training_plan(app_config, workers=1)
    cells: List[CellResult] = Parallel(n_jobs=config.workers)(
        delayed(run_cell)(d, sigma, policy, config.boundary, plan, config.benign_label,
                          app_config.get("EIGEN_TOL", 1e-8), app_config.get("EIGEN_MAX_ITER", 1000))
        for sigma, policy in cells_wanted
    )

    header = _header(config)
    out = config.output_dir
    for cell in cells:
        if not cell.ok:
            continue
        directory = _cell_dir(out, cell)
        save_model(cell.training.model, os.path.join(directory, "model.npz"))
        _write_text(directory, "training_report.json", to_json({**header, **cell.training.to_dict()}))
        _write_text(directory, "evaluation.json", to_json({**header, **cell.evaluation.to_dict()}))

    document = comparison_document(cells, header)
    _write_text(out, "comparison.json", to_json(document))
    _write_text(out, "comparison.txt", comparison_text(document))
    if pdf:
        with open(os.path.join(out, "comparison.pdf"), "wb") as handle:
            handle.write(generate_comparison_pdf(document))

    failed = [cell for cell in cells if not cell.ok]
    click.echo(f"{len(cells) - len(failed)}/{len(cells)} cell(s) completed; results in {out}")
    if failed:
        raise click.ClickException(f"{len(failed)} cell(s) failed: " + ", ".join(c.label for c in failed))


@bp.cli.command("synthesize")
@click.option("--benign", "n_benign", type=int, default=2000, show_default=True)
@click.option("--malicious", "n_malicious", type=int, default=200, show_default=True)
@common_options
@cli_errors
def synthesize_command(n_benign, n_malicious, config_file, **flags):
    """Write the seeded scanner-vs-benign demo corpus."""
    config = _run_config(flags, config_file)
    corpus = scanner_corpus(config.seed, n_benign, n_malicious, benign_label=config.benign_label)

    out = config.output_dir
    serialize_connections(corpus.dataset, os.path.join(out, "connections.csv"), config.mapping)
    info = {
        **_header(config),
        "benign": n_benign,
        "malicious": n_malicious,
        "boundary": str(corpus.boundary),
    }
    _write_text(out, "synthetic.json", to_json(info))
    click.echo(str(corpus.boundary))
