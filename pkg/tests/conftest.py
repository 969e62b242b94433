import datetime
import os

import numpy as np
import pandas as pd
import pytest

from mainbreak import CONFIG, features, ingest, synth
from mainbreak.features import FeatureMatrix


# A hand-built city: three blocks on street A (y = 0), two on street B (y = 400).
# Block 5 has no main. Mains run 10 ft off the centerline.
CITY_FILES = {
    "blocks": [
        {"block_id": 1, "street_id": "A", "label": "A St, 100-198", "geometry": "0 0;300 0",
         "soil_type": "clay", "rock_type": "shale", "pressure_zone": "low"},
        {"block_id": 2, "street_id": "A", "label": "A St, 200-298", "geometry": "300 0;600 0",
         "soil_type": "clay", "rock_type": "shale", "pressure_zone": "low"},
        {"block_id": 3, "street_id": "A", "label": "A St, 300-398", "geometry": "600 0;900 0",
         "soil_type": "loam", "rock_type": "shale", "pressure_zone": "high"},
        {"block_id": 4, "street_id": "B", "label": "B St, 100-198",
         "geometry": "0 400;300 400", "soil_type": "sand", "rock_type": "shale",
         "pressure_zone": "high"},
        {"block_id": 5, "street_id": "B", "label": "B St, 200-298",
         "geometry": "300 400;600 400", "soil_type": "sand", "rock_type": "shale",
         "pressure_zone": "high"}
    ],
    "mains": [
        {"main_id": 10, "geometry": "5 10;295 10", "diameter_in": "8", "material": "CI",
         "install_year": "1910"},
        {"main_id": 11, "geometry": "305 10;595 10", "diameter_in": "", "material": "",
         "install_year": ""},
        {"main_id": 12, "geometry": "605 10;895 10", "diameter_in": "12",
         "material": "Ductile Iron", "install_year": "1965"},
        {"main_id": 13, "geometry": "5 410;295 410", "diameter_in": "", "material": "",
         "install_year": ""}
    ],
    "work_orders": [
        {"event_id": 1, "date": "2008-03-01", "description": "Main Break/Leak",
         "main_id": "10", "x": "", "y": ""},
        {"event_id": 2, "date": "2009-06-15", "description": "main break/leak repair",
         "main_id": "", "x": "580", "y": "3"},
        {"event_id": 3, "date": "2010-01-01", "description": "Hydrant Repair",
         "main_id": "", "x": "100", "y": "0"},
        {"event_id": 4, "date": "2012-12-31", "description": "MAIN BREAK/LEAK",
         "main_id": "12", "x": "", "y": ""},
        {"event_id": 5, "date": "2005-01-01", "description": "Main Break/Leak",
         "main_id": "", "x": "150", "y": "400"},
        {"event_id": 6, "date": "2015-07-04", "description": "Main Break/Leak",
         "main_id": "10", "x": "", "y": ""}
    ],
    "road_ratings": [
        {"block_id": 1, "year": 2006, "rating": 7},
        {"block_id": 1, "year": 2010, "rating": 5},
        {"block_id": 2, "year": 2008, "rating": 6}
    ],
    "parcels": [
        {"block_id": 2, "first_tax_year": 1940},
        {"block_id": 2, "first_tax_year": 1935}
    ],
    "notebook": [
        {"street_id": "A", "material": "universal", "diameter_in": "6"}
    ]
}


def write_city_files(data_dir, files=None, **overrides):
    """Write the hand-built city, replacing any file's rows given in overrides."""
    os.makedirs(data_dir, exist_ok=True)
    files = dict(files or CITY_FILES, **overrides)
    for key, rows in files.items():
        if rows is None:
            continue
        spec = CONFIG["CSV_FILES"][key]
        columns = spec["required"] + spec["optional"]
        frame = pd.DataFrame(rows, columns=columns)
        frame.to_csv(os.path.join(data_dir, spec["file"]), index=False)
    return str(data_dir)


@pytest.fixture
def city_dir(tmp_path):
    return write_city_files(tmp_path / "data")


@pytest.fixture
def raw_city(city_dir):
    return ingest.load_raw_city(city_dir)


@pytest.fixture
def block_table(raw_city):
    return ingest.build_block_table(raw_city, 25.0)


@pytest.fixture
def feature_spec():
    return features.FeatureSpec(windows=(1, 2, 3, np.inf), nearby_radius=100.0, lookback=3,
                                horizon=3)


def make_matrix(values, columns, labels=None, block_ids=None):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    return FeatureMatrix(
        block_ids=np.asarray(block_ids if block_ids is not None else np.arange(1, n + 1),
                             dtype=np.int64),
        columns=tuple(columns), values=values,
        reference_dates=(datetime.date(2011, 1, 1),) * n,
        labels=None if labels is None else np.asarray(labels, dtype=float))


# Settings shared by the experiment tests: 11 years of data, 3-year lookback
EXPERIMENT_SETTINGS = {
    "windows": [1, 2, 3, "inf"],
    "lookback": 3,
    "horizon": 3,
    "iterations": 30,
    "start_year": 2005,
    "years": 11
}


def run_config(**settings):
    config = dict(CONFIG["RUN_DEFAULTS"])
    config.update(EXPERIMENT_SETTINGS)
    config.update(settings)
    return config


@pytest.fixture(scope="session")
def small_synth():
    """A 150-block synthetic city over 2005-2015, as (RawCity, BreakHistory, config)."""
    config = run_config(blocks=150, seed=7)
    raw, history = synth.synthesize(synth.SynthParams.from_config(config))
    return raw, history, config


@pytest.fixture(scope="session")
def small_synth_dir(small_synth, tmp_path_factory):
    raw, history, _ = small_synth
    out_dir = str(tmp_path_factory.mktemp("synth"))
    synth.write_synth_city(raw, history, out_dir)
    return out_dir
