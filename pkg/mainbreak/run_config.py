# Defaults for every run setting. Each key can be set in a config file
# ("key = value") or by the flag of the same name ("--key-name value").
RUN_DEFAULTS = {
    # Paths
    "data_dir": "data",
    "out_dir": "output",
    "config": None,
    "seed": 0,
    # Ingest
    "data_start_year": None,  # None infers from work order dates
    "data_end_year": None,
    "bbox": None,  # [min_x, min_y, max_x, max_y] in feet, or None
    "buffer_halfwidth": 25.0,  # Feet
    # Features
    "windows": [1, 2, 3, 5, "inf"],  # Years; "inf" counts all history
    "nearby_radius": 100.0,  # Feet
    "lookback": 6,  # Years
    "horizon": 3,  # Years
    "exclude_features": [],
    # Model
    "iterations": 100,
    "max_depth": 3,
    "subsample": 0.5,
    "learning_rate": 0.1,
    "min_samples_leaf": 5,
    # Evaluation
    "percent": 1.0,
    "bins": 10,
    "as_of": None,  # ISO date for "rank"
    # Synthetic city
    "blocks": 500,
    "blocks_per_street": 25,
    "start_year": 2004,
    "years": 12,
    "blank_fraction": 0.98,
    "target_rate": 0.09,
    "w_past": 1.1,
    "w_age": 0.25,
    "w_diameter": 0.08,
    "w_cast_iron": 0.3,
    "w_universal": 0.2
}
