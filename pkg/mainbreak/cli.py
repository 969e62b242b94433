"""Command-line entry point: mainbreak {synth,ingest,evaluate,rank,calibrate}."""
import argparse
import logging
import sys

import yaml

from mainbreak import CONFIG
from . import actions, error as err, utils


logger = logging.getLogger(__name__)

COMMANDS = {
    "synth": (actions.run_synth, "Generate a synthetic city dataset"),
    "ingest": (actions.run_ingest, "Validate input files and write block_table.csv"),
    "evaluate": (actions.run_evaluate, "Temporal cross-validation against baselines"),
    "rank": (actions.run_rank, "Rank every block for deployment as of a date"),
    "calibrate": (actions.run_calibrate, "Write the reliability curve only")
}
# Short spellings of common flags
ALIASES = {
    "data_dir": ["--data"],
    "out_dir": ["--out"]
}


def parse_flag_value(text):
    """Read a flag value as YAML; "1,2,inf" is read as a list."""
    text = text.strip()
    if "," in text and not text.startswith("["):
        text = f"[{text}]"
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        raise argparse.ArgumentTypeError(f"cannot parse '{text}'")


def parse_flag_list(text):
    value = parse_flag_value(text)
    return value if isinstance(value, list) else [value]


def _flag_type(key, default):
    if key in utils.TEXT_KEYS:
        return str
    if isinstance(default, list):
        return parse_flag_list
    if isinstance(default, bool) or default is None:
        return parse_flag_value
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    for key, default in CONFIG["RUN_DEFAULTS"].items():
        flags = [f"--{key.replace('_', '-')}"] + ALIASES.get(key, [])
        common.add_argument(*flags, dest=key, type=_flag_type(key, default), default=None,
                            metavar=key.upper(), help=f"(default: {default})")
    common.add_argument("--log-level", default=None,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--log-file", default=None,
                        help=f"Empty for none (default: {CONFIG['LOG_FILE']})")

    parser = argparse.ArgumentParser(
        prog="mainbreak",
        description="Rank city blocks by water main break risk.")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for name, (_, description) in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=description,
                              description=description)
    return parser


def format_comparison(report):
    """Model and baselines side by side: mean over splits, then the final split."""
    percent = f"{report.percent:g}%"
    lines = [f"{'strategy':<14}{'P@' + percent:>10}{'R@' + percent:>10}{'hits':>8}"
             f"{'final P':>10}{'final R':>10}"]
    for strategy, mean in report.mean.items():
        final = report.final_split[strategy]
        lines.append(f"{strategy:<14}{mean['precision']:>10.3f}{mean['recall']:>10.3f}"
                     f"{mean['hits']:>8.1f}{final['precision']:>10.3f}"
                     f"{final['recall']:>10.3f}")
    k = report.splits[0].k
    lines.append(f"{len(report.splits) // len(report.mean)} splits, k = {k} of "
                 f"{report.splits[0].n_blocks} blocks")
    return "\n".join(lines)


def _summary(command, result):
    if command == "synth":
        return f"Wrote synthetic city to {result['out_dir']} ({result['breaks']} breaks)"
    if command == "ingest":
        return (f"{result['modeled']} modeled blocks, {result['rejects']} rejects; "
                f"counts {result['counts']}")
    if command == "evaluate":
        return format_comparison(result["report"])
    if command == "rank":
        return f"Ranked {result['blocks']} blocks as of {result['as_of']}"
    return f"Wrote reliability curve ({len(result['reliability'])} bins)"


def main(argv=None):
    parser = build_parser()
    # Exits with status 2 on bad usage
    args = parser.parse_args(argv)
    utils.setup_logging(args.log_level, args.log_file)
    flags = {key: getattr(args, key) for key in CONFIG["RUN_DEFAULTS"] if key != "config"}
    try:
        config = utils.resolve_run_config(flags, args.config)
        logger.info(f"Running '{args.command}' with seed {config['seed']}")
        result = COMMANDS[args.command][0](config)
    except err.MainbreakError as e:
        logger.error(f"'{args.command}' failed: {e}")
        for detail in e.to_dict()["errors"]:
            print(f"mainbreak {args.command}: error: {detail['detail']}", file=sys.stderr)
        return e.status
    print(_summary(args.command, result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
