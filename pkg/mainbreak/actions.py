import logging
import os

from mainbreak import CONFIG
from . import evaluation, gbdt, ingest, synth
from .features import reference_date_for, write_features
from .utils import prepare_out_dir, write_run_config


logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
RANKINGS_FILE = "rankings.csv"
RELIABILITY_FILE = "reliability.csv"
PR_CURVE_FILE = "pr_curve.csv"
MODEL_FILE = "model.json"
FEATURES_FILE = "features.csv"


def load_block_table(config):
    """Ingest the configured data directory and aggregate it to blocks.

    Returns:
        tuple: (RawCity, BlockTable).
    """
    raw = ingest.load_raw_city(config["data_dir"],
                               data_start_year=config["data_start_year"],
                               data_end_year=config["data_end_year"],
                               bbox=config["bbox"])
    table = ingest.build_block_table(raw, float(config["buffer_halfwidth"]))
    return raw, table


def run_synth(config):
    """Generate a synthetic city and write its CSV files to out_dir.

    Arguments:
        config (dict): Resolved run config.

    Returns:
        dict: The result of the run.
            success (bool): True when every file was written.
            out_dir (str): Where the files are.
            breaks (int): How many main breaks were simulated.
    """
    params = synth.SynthParams.from_config(config)
    out_dir = prepare_out_dir(config["out_dir"])
    raw, history = synth.synthesize(params)
    synth.write_synth_city(raw, history, out_dir)
    write_run_config(config, out_dir)
    return {
        "success": True,
        "out_dir": out_dir,
        "breaks": int(history.breaks.sum())
    }


def run_ingest(config):
    """Validate the data directory and write block_table.csv and rejects.csv.

    Returns:
        dict: The result of the run.
            success (bool): True when the data was ingested.
            counts (dict): Accepted and rejected rows per input file.
            rejects (int): Total rejected rows and unresolved breaks.
            modeled (int): Blocks with at least one main.
    """
    out_dir = prepare_out_dir(config["out_dir"])
    raw, table = load_block_table(config)
    ingest.write_block_table(table, os.path.join(out_dir, CONFIG["BLOCK_TABLE_FILE"]))
    ingest.write_rejects(table.rejects, os.path.join(out_dir, CONFIG["REJECTS_FILE"]))
    write_run_config(config, out_dir)
    return {
        "success": True,
        "counts": raw.counts,
        "rejects": len(table.rejects),
        "modeled": len(table.modeled())
    }


def run_evaluate(config):
    """Run temporal cross-validation and write the report files.

    Writes report.json, rankings.csv and features.csv (final split), reliability.csv
    and pr_curve.csv.

    Returns:
        dict: The result of the run.
            success (bool): True when every file was written.
            report (ExperimentReport): The experiment's results.
    """
    out_dir = prepare_out_dir(config["out_dir"])
    _, table = load_block_table(config)
    report = evaluation.evaluate_table(table, config)
    evaluation.write_report(report, os.path.join(out_dir, REPORT_FILE))
    evaluation.write_rankings(report.rankings, os.path.join(out_dir, RANKINGS_FILE))
    evaluation.write_reliability(report.reliability, os.path.join(out_dir, RELIABILITY_FILE))
    evaluation.write_pr_curve(report.pr_curve, os.path.join(out_dir, PR_CURVE_FILE))
    write_features(report.test_features, os.path.join(out_dir, FEATURES_FILE))
    write_run_config(config, out_dir)
    return {
        "success": True,
        "report": report
    }


def run_calibrate(config):
    """Run temporal cross-validation and write reliability.csv only."""
    out_dir = prepare_out_dir(config["out_dir"])
    _, table = load_block_table(config)
    report = evaluation.evaluate_table(table, config)
    evaluation.write_reliability(report.reliability, os.path.join(out_dir, RELIABILITY_FILE))
    write_run_config(config, out_dir)
    return {
        "success": True,
        "reliability": report.reliability
    }


def run_rank(config):
    """Train on all history before as_of and write the deployment ranking.

    as_of defaults to the day after the data coverage ends. Writes rankings.csv
    and the trained model.

    Returns:
        dict: The result of the run.
            success (bool): True when the ranking was written.
            as_of (str): The ranking date.
            blocks (int): Ranked blocks.
    """
    out_dir = prepare_out_dir(config["out_dir"])
    _, table = load_block_table(config)
    if config["as_of"] is None:
        as_of = reference_date_for(table.data_range[1] + 1)
    else:
        as_of = evaluation.parse_as_of(config["as_of"])
    model, rows = evaluation.rank_blocks(table, config, as_of)
    evaluation.write_rankings(rows, os.path.join(out_dir, RANKINGS_FILE))
    gbdt.save_model(model, os.path.join(out_dir, MODEL_FILE), run_config=config)
    write_run_config(config, out_dir)
    return {
        "success": True,
        "as_of": as_of.isoformat(),
        "blocks": len(rows)
    }
