import datetime


BASE_CONFIG = {
    "LOG_LEVEL": "INFO",
    "LOG_FILE": "mainbreak.log",
    "LOG_FORMAT": "[{asctime}] [{levelname}] {name}: {message}",
    "LOG_DATEFMT": "%Y-%m-%d %H:%M:%S",
    # Fraction of rejected rows in any one file that aborts ingest
    "REJECT_THRESHOLD": 0.10,
    "INSTALL_YEAR_BOUNDS": [1800, datetime.date.today().year],
    "MATERIALS": ["cast_iron", "ductile_iron", "universal", "other", "unknown"],
    # One-hot families, in column order
    "CATEGORICAL_FAMILIES": ["material", "soil_type", "rock_type", "pressure_zone"],
    "MODEL_FORMAT_VERSION": 1,
    "RUN_CONFIG_FILE": "run_config.json"
}
