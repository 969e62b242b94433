RUN_CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "title": "Mainbreak Run Config",
    "description": ("The fully resolved settings for one run. Every output of the run "
                    "embeds this document so the run can be reproduced exactly."),
    "type": "object",
    "properties": {
        "data_dir": {
            "type": "string",
            "description": "Directory holding the input CSV files."
        },
        "out_dir": {
            "type": "string",
            "description": "Directory receiving every output file."
        },
        "config": {
            "type": ["string", "null"],
            "description": "The config file the settings were read from, if any."
        },
        "seed": {
            "type": "integer",
            "minimum": 0,
            "description": "Seed for every random draw in the run."
        },
        "data_start_year": {
            "type": ["integer", "null"],
            "description": "First year of data coverage. Null infers it from work orders."
        },
        "data_end_year": {
            "type": ["integer", "null"],
            "description": "Last year (inclusive) of data coverage."
        },
        "bbox": {
            "type": ["array", "null"],
            "description": "Accepted coordinate range [min_x, min_y, max_x, max_y], in feet.",
            "items": {"type": "number"},
            "minItems": 4,
            "maxItems": 4
        },
        "buffer_halfwidth": {
            "type": "number",
            "exclusiveMinimum": True,
            "minimum": 0,
            "description": "Half-width of the street buffer used to assign mains, in feet."
        },
        "windows": {
            "type": "array",
            "description": "Break-count windows in years; \"inf\" counts all history.",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {"type": "integer", "minimum": 1},
                    {"type": "string", "enum": ["inf"]}
                ]
            }
        },
        "nearby_radius": {
            "type": "number",
            "exclusiveMinimum": True,
            "minimum": 0,
            "description": "Radius for counting breaks near a block, in feet."
        },
        "lookback": {
            "type": "integer",
            "minimum": 1,
            "description": "Years of history used for features."
        },
        "horizon": {
            "type": "integer",
            "minimum": 1,
            "description": "Years in the label window."
        },
        "exclude_features": {
            "type": "array",
            "description": "Feature columns or families left out of the matrix.",
            "items": {"type": "string"}
        },
        "iterations": {"type": "integer", "minimum": 1},
        "max_depth": {"type": "integer", "minimum": 1},
        "subsample": {
            "type": "number",
            "exclusiveMinimum": True,
            "minimum": 0,
            "maximum": 1
        },
        "learning_rate": {
            "type": "number",
            "exclusiveMinimum": True,
            "minimum": 0
        },
        "min_samples_leaf": {"type": "integer", "minimum": 1},
        "percent": {
            "type": "number",
            "exclusiveMinimum": True,
            "minimum": 0,
            "maximum": 100,
            "description": "Top share of blocks, in percent, for precision and recall."
        },
        "bins": {"type": "integer", "minimum": 2},
        "as_of": {
            "type": ["string", "null"],
            "description": "ISO date the deployment ranking is made as of."
        },
        "blocks": {"type": "integer", "minimum": 1},
        "blocks_per_street": {"type": "integer", "minimum": 1},
        "start_year": {"type": "integer", "minimum": 1800},
        "years": {"type": "integer", "minimum": 1},
        "blank_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "target_rate": {
            "type": "number",
            "exclusiveMinimum": True,
            "minimum": 0,
            "exclusiveMaximum": True,
            "maximum": 1
        },
        "w_past": {"type": "number"},
        "w_age": {"type": "number"},
        "w_diameter": {"type": "number"},
        "w_cast_iron": {"type": "number"},
        "w_universal": {"type": "number"}
    },
    "required": ["data_dir", "out_dir", "seed"],
    "additionalProperties": False
}

_NODE = {
    "type": "object",
    "description": "A split node (feature, threshold, gain, left, right) or a leaf (value).",
    "oneOf": [{
        "properties": {
            "feature": {"type": "integer", "minimum": 0},
            "threshold": {"type": "number"},
            "gain": {"type": "number", "minimum": 0},
            "n_samples": {"type": "integer", "minimum": 1},
            "left": {"type": "object"},
            "right": {"type": "object"}
        },
        "required": ["feature", "threshold", "gain", "n_samples", "left", "right"]
    }, {
        "properties": {
            "value": {"type": "number"},
            "n_samples": {"type": "integer", "minimum": 0}
        },
        "required": ["value"]
    }]
}

MODEL_SCHEMA = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "title": "Mainbreak GBDT Model",
    "description": ("A trained stochastic gradient-boosted tree model: base score plus an "
                    "ordered list of weighted regression trees."),
    "type": "object",
    "properties": {
        "version": {
            "type": "integer",
            "description": "Model file format version."
        },
        "config": {
            "type": "object",
            "description": "Training config snapshot."
        },
        "feature_names": {
            "type": "array",
            "items": {"type": "string"}
        },
        "base_score": {"type": "number"},
        "objective": {
            "type": "array",
            "description": "Full-sample mean squared loss after each iteration.",
            "items": {"type": "number"}
        },
        "trees": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "weight": {"type": "number"},
                    "root": _NODE
                },
                "required": ["weight", "root"]
            }
        }
    },
    "required": ["version", "config", "feature_names", "base_score", "trees"]
}

_METRICS = {
    "type": "object",
    "properties": {
        "precision": {"type": "number", "minimum": 0, "maximum": 1},
        "recall": {"type": "number", "minimum": 0, "maximum": 1},
        "hits": {"type": "number", "minimum": 0}
    },
    "required": ["precision", "recall"]
}

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "title": "Mainbreak Experiment Report",
    "description": ("Per-split and aggregated top-k metrics for the model and every "
                    "baseline, feature importances, and the reliability curve."),
    "type": "object",
    "properties": {
        "config": {"type": "object"},
        "percent": {"type": "number"},
        "splits": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "test_year": {"type": "integer"},
                    "train_years": {"type": "array", "items": {"type": "integer"}},
                    "strategy": {"type": "string"},
                    "k": {"type": "integer", "minimum": 1},
                    "n_blocks": {"type": "integer", "minimum": 1},
                    "precision": {"type": "number"},
                    "recall": {"type": "number"},
                    "hits": {"type": "integer"},
                    "positives": {"type": "integer"},
                    "degenerate": {"type": "boolean"}
                },
                "required": ["test_year", "strategy", "k", "n_blocks", "precision", "recall"]
            }
        },
        "mean": {
            "type": "object",
            "description": "Arithmetic mean over splits, per strategy.",
            "additionalProperties": _METRICS
        },
        "final_split": {
            "type": "object",
            "description": "Metrics of the last split, per strategy.",
            "additionalProperties": _METRICS
        },
        "importances": {
            "type": "object",
            "additionalProperties": {"type": "number", "minimum": 0}
        },
        "reliability": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "lower": {"type": "number"},
                    "upper": {"type": "number"},
                    "mean_predicted": {"type": ["number", "null"]},
                    "mean_empirical": {"type": ["number", "null"]},
                    "count": {"type": "integer", "minimum": 0},
                    "positives": {"type": "integer", "minimum": 0}
                },
                "required": ["lower", "upper", "mean_predicted", "mean_empirical", "count"]
            }
        }
    },
    "required": ["config", "percent", "splits", "mean", "final_split", "importances",
                 "reliability"]
}
