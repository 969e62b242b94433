from copy import deepcopy
import json
import logging
import os

import jsonschema
import pandas as pd
import yaml

from mainbreak import CONFIG
from . import error as err


logger = logging.getLogger(__name__)

# Run settings that are always text, even when they look like numbers or dates
TEXT_KEYS = ("data_dir", "out_dir", "config", "as_of")


def setup_logging(level=None, log_file=None):
    """Send package logs to the log file (appending) and to stderr.

    Calling again replaces the handlers installed by an earlier call.
    """
    level = level or CONFIG["LOG_LEVEL"]
    log_file = CONFIG["LOG_FILE"] if log_file is None else log_file
    pkg_logger = logging.getLogger("mainbreak")
    pkg_logger.setLevel(level)
    for handler in list(pkg_logger.handlers):
        pkg_logger.removeHandler(handler)
        handler.close()
    formatter = logging.Formatter(CONFIG["LOG_FORMAT"], style='{',
                                  datefmt=CONFIG["LOG_DATEFMT"])
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode='a'))
    for handler in handlers:
        handler.setFormatter(formatter)
        pkg_logger.addHandler(handler)
    return pkg_logger


#######################################
# Run config
#######################################

def read_config_file(path):
    """Read a flat "key = value" config file.

    Blank lines and lines starting with "#" are skipped. Each value is read as a
    YAML scalar or flow list, so "0.1", "[1, 2, inf]" and "null" come back typed.

    Arguments:
        path (str): The config file.

    Returns:
        dict: The settings, in file order.
    """
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise err.ConfigurationError(f"Cannot read config file '{path}': {e.strerror}")
    settings = {}
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise err.ConfigurationError(f"{path}, line {number}: expected 'key = value'")
        if key not in CONFIG["RUN_DEFAULTS"]:
            raise err.ConfigurationError(f"{path}, line {number}: unknown setting '{key}'")
        try:
            settings[key] = yaml.safe_load(value.strip()) if value.strip() else None
        except yaml.YAMLError:
            raise err.ConfigurationError(f"{path}, line {number}: cannot parse value "
                                         f"'{value.strip()}'")
    return settings


def resolve_run_config(flags=None, config_path=None):
    """Merge defaults, then the config file, then command-line flags.

    Arguments:
        flags (dict): Settings given on the command line. None values are unset.
                Default None.
        config_path (str): A "key = value" config file.
                Default None, for no file.

    Returns:
        dict: The validated run config.
    """
    config = deepcopy(CONFIG["RUN_DEFAULTS"])
    if config_path:
        config.update(read_config_file(config_path))
        config["config"] = config_path
    for key, value in (flags or {}).items():
        if value is not None:
            config[key] = value
    for key in TEXT_KEYS:
        if config.get(key) is not None:
            config[key] = str(config[key])
    # A single value for a list setting is a one-item list
    for key, default in CONFIG["RUN_DEFAULTS"].items():
        if isinstance(default, list) and config[key] is not None \
                and not isinstance(config[key], list):
            config[key] = [config[key]]
    try:
        jsonschema.validate(config, CONFIG["RUN_CONFIG_SCHEMA"])
    except jsonschema.ValidationError as e:
        where = ".".join(str(p) for p in e.absolute_path) or "config"
        raise err.ConfigurationError(f"Invalid setting {where}: {e.message}")
    return config


def prepare_out_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise err.MainbreakError(f"Cannot create output directory '{path}': {e.strerror}")
    if not os.access(path, os.W_OK):
        raise err.MainbreakError(f"Output directory '{path}' is not writable")
    return path


def write_run_config(config, out_dir):
    path = os.path.join(out_dir, CONFIG["RUN_CONFIG_FILE"])
    with open(path, "w") as f:
        json.dump(config, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


#######################################
# CSV output
#######################################

def format_value(value):
    """Canonical text of one CSV cell: blank for None, shortest round-trip form for floats."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_csv(rows, columns, path):
    frame = pd.DataFrame(rows, columns=columns, dtype=str)
    frame.to_csv(path, index=False, lineterminator="\n")
