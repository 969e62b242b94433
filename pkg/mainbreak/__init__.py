from mdf_toolbox import dict_merge

from .base_config import BASE_CONFIG
from .ingest_config import INGEST_CONFIG
from .run_config import RUN_DEFAULTS
from .schemas import MODEL_SCHEMA, REPORT_SCHEMA, RUN_CONFIG_SCHEMA

# Config setup
CONFIG = {
    "RUN_DEFAULTS": RUN_DEFAULTS,
    "RUN_CONFIG_SCHEMA": RUN_CONFIG_SCHEMA,
    "MODEL_SCHEMA": MODEL_SCHEMA,
    "REPORT_SCHEMA": REPORT_SCHEMA
}
CONFIG = dict_merge(BASE_CONFIG, CONFIG)
CONFIG = dict_merge(INGEST_CONFIG, CONFIG)
