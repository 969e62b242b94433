import json
import logging

import numpy as np
import pytest

from mainbreak import CONFIG, utils
from mainbreak.error import ConfigurationError


def test_read_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n"
                    "\n"
                    "seed = 7\n"
                    "learning-rate = 0.05\n"
                    "windows = [1, 5, inf]\n"
                    "as_of = 2016-01-01\n"
                    "bbox = null\n")
    settings = utils.read_config_file(str(path))
    assert settings["seed"] == 7
    assert settings["learning_rate"] == 0.05
    assert settings["windows"] == [1, 5, "inf"]
    assert settings["bbox"] is None


@pytest.mark.parametrize("text", ["seed 7\n", "colour = red\n", "windows = [1, 2\n"])
def test_bad_config_lines(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    with pytest.raises(ConfigurationError, match="line 1"):
        utils.read_config_file(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError, match="Cannot read"):
        utils.read_config_file(str(tmp_path / "none.cfg"))


def test_resolve_run_config_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 7\niterations = 50\nas_of = 2016-01-01\n")
    config = utils.resolve_run_config({"iterations": 5, "seed": None}, str(path))
    assert config["iterations"] == 5
    assert config["seed"] == 7
    assert config["as_of"] == "2016-01-01"
    assert config["config"] == str(path)
    assert config["max_depth"] == CONFIG["RUN_DEFAULTS"]["max_depth"]


def test_resolve_run_config_defaults_are_not_shared():
    config = utils.resolve_run_config()
    config["windows"].append(99)
    assert 99 not in CONFIG["RUN_DEFAULTS"]["windows"]


def test_resolve_run_config_coercion():
    config = utils.resolve_run_config({"exclude_features": "pipe_age", "data_dir": 2020})
    assert config["exclude_features"] == ["pipe_age"]
    assert config["data_dir"] == "2020"


def test_resolve_run_config_validation():
    with pytest.raises(ConfigurationError, match="subsample"):
        utils.resolve_run_config({"subsample": "most"})


def test_format_value():
    assert utils.format_value(None) == ""
    assert utils.format_value(0.1) == "0.1"
    assert utils.format_value(np.float64(1) / 3) == repr(1 / 3)
    assert utils.format_value(12) == "12"


def test_write_csv(tmp_path):
    path = tmp_path / "rows.csv"
    utils.write_csv([["1", ""], ["2", "x, y"]], ["id", "note"], path)
    assert path.read_bytes() == b'id,note\n1,\n2,"x, y"\n'


def test_run_config_file(tmp_path):
    out_dir = utils.prepare_out_dir(str(tmp_path / "a" / "b"))
    path = utils.write_run_config({"seed": 3, "blocks": 10}, out_dir)
    with open(path) as f:
        assert json.load(f) == {"blocks": 10, "seed": 3}


def test_setup_logging_replaces_handlers(tmp_path):
    log_file = str(tmp_path / "run.log")
    utils.setup_logging("DEBUG", log_file)
    pkg_logger = utils.setup_logging("DEBUG", log_file)
    assert len(pkg_logger.handlers) == 2
    logging.getLogger("mainbreak.test").debug("hello from the test")
    for handler in pkg_logger.handlers:
        handler.flush()
    with open(log_file) as f:
        assert "[DEBUG] mainbreak.test: hello from the test" in f.read()
    assert len(utils.setup_logging("INFO", "").handlers) == 1
