"""Labeled feature matrices for a reference date.

Nothing dated on or after the reference date reaches a feature value; labels look
only at [reference_date, reference_date + horizon).
"""
from dataclasses import dataclass, replace
import datetime
import logging
import math

from dateutil.relativedelta import relativedelta
import isodate
import numpy as np
import pandas as pd

from mainbreak import CONFIG
from . import geo
from .error import ConfigurationError, FeatureError
from .ingest import latest_rating


logger = logging.getLogger(__name__)

OTHER_CATEGORY = "other"
NUMERIC_COLUMNS = ("pipe_age", "install_year", "diameter", "road_rating")
FLAG_COLUMNS = ("install_year_imputed", "diameter_imputed")
NEARBY_COLUMN = "breaks_nearby"


def parse_window(value):
    if isinstance(value, str) and value.strip().lower() in ("inf", "all"):
        return math.inf
    window = int(value)
    if window < 1:
        raise ConfigurationError(f"Break-count window must be positive, got {value}")
    return window


def window_column(window):
    return "breaks_all" if math.isinf(window) else f"breaks_{window}y"


def onehot_column(family, category):
    return f"{family}={category}"


@dataclass(frozen=True)
class FeatureSpec:
    windows: tuple = (1, 2, 3, 5, math.inf)
    nearby_radius: float = 100.0
    lookback: int = 6
    horizon: int = 3
    # ((family, (category, ...)), ...) frozen from training data; None until frozen
    vocabularies: tuple = None
    exclude: tuple = ()

    def __post_init__(self):
        windows = tuple(self.windows)
        if not windows or any(w <= 0 for w in windows):
            raise ConfigurationError(f"Windows must be positive, got {windows}")
        if any(a >= b for a, b in zip(windows, windows[1:])):
            raise ConfigurationError(f"Windows must be sorted and distinct, got {windows}")
        finite = [w for w in windows if not math.isinf(w)]
        if finite and self.lookback < max(finite):
            raise ConfigurationError(f"Lookback {self.lookback} is shorter than the "
                                     f"longest finite window {max(finite)}")
        if self.nearby_radius <= 0:
            raise ConfigurationError(f"Nearby radius must be positive, got {self.nearby_radius}")
        if self.horizon < 1:
            raise ConfigurationError(f"Horizon must be at least 1 year, got {self.horizon}")
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "exclude", tuple(self.exclude))

    @classmethod
    def from_config(cls, config):
        return cls(windows=tuple(parse_window(w) for w in config["windows"]),
                   nearby_radius=float(config["nearby_radius"]),
                   lookback=int(config["lookback"]),
                   horizon=int(config["horizon"]),
                   exclude=tuple(config.get("exclude_features") or ()))

    @property
    def frozen(self):
        return self.vocabularies is not None

    def vocabulary(self, family):
        return dict(self.vocabularies or ())[family]

    def _excluded(self, column):
        return column in self.exclude or column.split("=")[0] in self.exclude

    def columns(self):
        """Feature column names in their stable order."""
        if not self.frozen:
            raise FeatureError("Categorical vocabularies are not frozen")
        cols = list(NUMERIC_COLUMNS)
        cols += [window_column(w) for w in self.windows]
        cols.append(NEARBY_COLUMN)
        cols += list(FLAG_COLUMNS)
        for family in CONFIG["CATEGORICAL_FAMILIES"]:
            cols += [onehot_column(family, c) for c in self.vocabulary(family)]
            cols.append(onehot_column(family, OTHER_CATEGORY))
        return tuple(c for c in cols if not self._excluded(c))


def freeze_vocabularies(table, spec):
    """Fix each categorical family's columns to the categories seen on modeled blocks."""
    vocabularies = []
    for family in CONFIG["CATEGORICAL_FAMILIES"]:
        seen = {getattr(block, family) for block in table.modeled()}
        seen.discard(OTHER_CATEGORY)
        vocabularies.append((family, tuple(sorted(seen))))
    return replace(spec, vocabularies=tuple(vocabularies))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows are (block, reference date) pairs; labels are None for deployment scoring."""
    block_ids: np.ndarray
    columns: tuple
    values: np.ndarray
    reference_dates: tuple
    labels: np.ndarray = None

    def __len__(self):
        return len(self.block_ids)

    @property
    def reference_date(self):
        dates = set(self.reference_dates)
        if len(dates) != 1:
            raise FeatureError(f"Matrix spans {len(dates)} reference dates")
        return next(iter(dates))

    def column(self, name):
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise FeatureError(f"Matrix has no column '{name}'")

    def with_labels(self, labels):
        labels = None if labels is None else np.asarray(labels, dtype=float)
        if labels is not None and labels.shape != (len(self),):
            raise FeatureError(f"{labels.shape[0]} labels for {len(self)} rows")
        return replace(self, labels=labels)

    def to_frame(self):
        frame = pd.DataFrame(self.values, columns=list(self.columns))
        frame.insert(0, "reference_date", [d.isoformat() for d in self.reference_dates])
        frame.insert(0, "block_id", self.block_ids)
        if self.labels is not None:
            frame["label"] = self.labels.astype(int)
        return frame


def shift_years(date, years):
    return date + relativedelta(years=years)


def _check_coverage(table, reference_date):
    if not table.coverage_start <= reference_date <= table.coverage_end:
        raise FeatureError(f"Reference date {reference_date} outside data coverage "
                           f"{table.coverage_start} to {table.coverage_end}")


def build_features(table, spec, reference_date):
    """Build the unlabeled feature matrix of modeled blocks as of reference_date.

    Arguments:
        table (BlockTable): Aggregated, imputed blocks.
        spec (FeatureSpec): Windows, radius, lookback and frozen vocabularies.
                Unfrozen vocabularies are frozen from this table.
        reference_date (datetime.date): The "as of" instant.

    Returns:
        FeatureMatrix: One row per modeled block, ordered by block_id.
    """
    _check_coverage(table, reference_date)
    if not spec.frozen:
        spec = freeze_vocabularies(table, spec)
    columns = spec.columns()
    index = {name: i for i, name in enumerate(columns)}
    lookback_start = shift_years(reference_date, -spec.lookback)
    window_starts = [None if math.isinf(w) else shift_years(reference_date, -w)
                     for w in spec.windows]
    history = [(event_id, point) for event_id, date, point, _ in table.break_events()
               if lookback_start <= date < reference_date]

    blocks = sorted(table.modeled(), key=lambda b: b.block_id)
    values = np.zeros((len(blocks), len(columns)), dtype=float)

    def put(row, name, value):
        col = index.get(name)
        if col is not None:
            values[row, col] = value

    for row, block in enumerate(blocks):
        put(row, "pipe_age", reference_date.year - block.install_year)
        put(row, "install_year", block.install_year)
        put(row, "diameter", block.diameter)
        put(row, "road_rating", latest_rating(block, reference_date.year))
        past = [event.date for event in block.breaks if event.date < reference_date]
        for window, start in zip(spec.windows, window_starts):
            count = len(past) if start is None else sum(1 for d in past if d >= start)
            put(row, window_column(window), count)
        if NEARBY_COLUMN in index:
            own = {event.event_id for event in block.breaks}
            put(row, NEARBY_COLUMN, geo.breaks_within_radius(history, block.geometry,
                                                             spec.nearby_radius, exclude=own))
        put(row, "install_year_imputed", float(block.install_year_imputed))
        put(row, "diameter_imputed", float(block.diameter_imputed))
        for family in CONFIG["CATEGORICAL_FAMILIES"]:
            category = getattr(block, family)
            if category not in spec.vocabulary(family):
                category = OTHER_CATEGORY
            put(row, onehot_column(family, category), 1.0)

    logger.debug(f"Built {values.shape[0]}x{values.shape[1]} features as of {reference_date}")
    return FeatureMatrix(block_ids=np.array([b.block_id for b in blocks], dtype=np.int64),
                         columns=columns, values=values,
                         reference_dates=(reference_date,) * len(blocks))


def label_blocks(table, reference_date, horizon=3, deployment=False):
    """Label modeled blocks 1 iff a break falls in [reference_date, reference_date + horizon).

    Arguments:
        table (BlockTable): Aggregated blocks.
        reference_date (datetime.date): Start of the label window.
        horizon (int): Label window length in years.
                Default 3.
        deployment (bool): When True, a window running past the data returns None
                instead of raising.
                Default False.

    Returns:
        numpy.ndarray: 0/1 labels ordered by block_id, or None in deployment mode
            when the window is not covered.
    """
    _check_coverage(table, reference_date)
    end = shift_years(reference_date, horizon)
    if end > table.coverage_end:
        if deployment:
            return None
        raise FeatureError(f"Label window {reference_date} to {end} runs past the data "
                           f"end {table.coverage_end}")
    blocks = sorted(table.modeled(), key=lambda b: b.block_id)
    return np.array([1.0 if any(reference_date <= e.date < end for e in block.breaks) else 0.0
                     for block in blocks])


def build_labeled_matrix(table, spec, reference_date):
    matrix = build_features(table, spec, reference_date)
    return matrix.with_labels(label_blocks(table, reference_date, spec.horizon))


def reference_date_for(year):
    """Reference dates are January 1 of the split year."""
    return datetime.date(year, 1, 1)


def pool_matrices(matrices):
    """Stack matrices built with one spec into a single training matrix."""
    if not matrices:
        raise FeatureError("No matrices to pool")
    columns = matrices[0].columns
    if any(m.columns != columns for m in matrices):
        raise FeatureError("Cannot pool matrices with different columns")
    labeled = [m.labels is not None for m in matrices]
    if any(labeled) and not all(labeled):
        raise FeatureError("Cannot pool labeled with unlabeled matrices")
    return FeatureMatrix(
        block_ids=np.concatenate([m.block_ids for m in matrices]),
        columns=columns,
        values=np.vstack([m.values for m in matrices]),
        reference_dates=tuple(d for m in matrices for d in m.reference_dates),
        labels=np.concatenate([m.labels for m in matrices]) if all(labeled) else None)


def write_features(matrix, path):
    matrix.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_features(path):
    """Reload a matrix written by write_features, bit for bit."""
    frame = pd.read_csv(path, float_precision="round_trip")
    labels = None
    if "label" in frame.columns:
        labels = frame.pop("label").to_numpy(dtype=float)
    block_ids = frame.pop("block_id").to_numpy(dtype=np.int64)
    dates = tuple(isodate.parse_date(d) for d in frame.pop("reference_date"))
    return FeatureMatrix(block_ids=block_ids, columns=tuple(frame.columns),
                         values=frame.to_numpy(dtype=float), reference_dates=dates,
                         labels=labels)
