from dataclasses import replace
import datetime
import math

import numpy as np
import pytest

from mainbreak import CONFIG, features, geo, ingest
from mainbreak.error import ConfigurationError, FeatureError

from conftest import make_matrix


REF = datetime.date(2011, 1, 1)


def test_spec_from_run_defaults():
    spec = features.FeatureSpec.from_config(CONFIG["RUN_DEFAULTS"])
    assert spec.windows == (1, 2, 3, 5, math.inf)
    assert spec.lookback == 6 and spec.horizon == 3
    assert not spec.frozen


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        features.FeatureSpec(windows=(1, 5), lookback=3)
    with pytest.raises(ConfigurationError):
        features.FeatureSpec(windows=(3, 1))
    with pytest.raises(ConfigurationError):
        features.FeatureSpec(nearby_radius=0)
    with pytest.raises(ConfigurationError):
        features.parse_window("0")
    assert features.parse_window("inf") == math.inf


def test_build_features_values(block_table, feature_spec):
    matrix = features.build_features(block_table, feature_spec, REF)
    assert list(matrix.block_ids) == [1, 2, 3, 4]
    assert matrix.columns[:11] == ("pipe_age", "install_year", "diameter", "road_rating",
                                   "breaks_1y", "breaks_2y", "breaks_3y", "breaks_all",
                                   "breaks_nearby", "install_year_imputed",
                                   "diameter_imputed")
    frame = matrix.to_frame().set_index("block_id")
    assert list(frame["pipe_age"]) == [101, 76, 46, 76]
    assert list(frame["road_rating"]) == [5, 6, 0, 0]
    assert list(frame["breaks_1y"]) == [0, 0, 0, 0]
    assert list(frame["breaks_2y"]) == [0, 1, 0, 0]
    assert list(frame["breaks_3y"]) == [1, 1, 0, 0]
    assert list(frame["breaks_all"]) == [1, 1, 0, 1]
    # Block 3's street passes 20 ft from the 2009 break on block 2
    assert list(frame["breaks_nearby"]) == [0, 0, 1, 0]
    assert list(frame["install_year_imputed"]) == [0, 0, 0, 1]
    assert list(frame["diameter_imputed"]) == [0, 0, 0, 1]
    assert frame.loc[2, "material=universal"] == 1
    assert frame.loc[4, "material=unknown"] == 1


def test_onehot_rows_sum_to_one(block_table, feature_spec):
    matrix = features.build_features(block_table, feature_spec, REF)
    for family in CONFIG["CATEGORICAL_FAMILIES"]:
        cols = [i for i, c in enumerate(matrix.columns) if c.startswith(family + "=")]
        assert np.all(matrix.values[:, cols].sum(axis=1) == 1)


def test_unseen_category_goes_to_other(block_table, feature_spec):
    frozen = features.freeze_vocabularies(block_table, feature_spec)
    vocabularies = tuple((family, ("clay",) if family == "soil_type" else categories)
                         for family, categories in frozen.vocabularies)
    spec = replace(frozen, vocabularies=vocabularies)
    frame = features.build_features(block_table, spec, REF).to_frame().set_index("block_id")
    assert "soil_type=sand" not in frame.columns
    assert list(frame["soil_type=clay"]) == [1, 1, 0, 0]
    assert list(frame["soil_type=other"]) == [0, 0, 1, 1]


def test_excluded_features(block_table, feature_spec):
    spec = replace(feature_spec, exclude=("road_rating", "material"))
    matrix = features.build_features(block_table, spec, REF)
    assert "road_rating" not in matrix.columns
    assert not any(c.startswith("material=") for c in matrix.columns)
    assert "soil_type=clay" in matrix.columns


def test_event_on_reference_date_is_label_not_feature(block_table, feature_spec):
    ref = datetime.date(2012, 12, 31)
    matrix = features.build_features(block_table, feature_spec, ref)
    assert matrix.column("breaks_all")[2] == 0
    assert list(features.label_blocks(block_table, ref, 3)) == [1, 0, 1, 0]


def test_labels(block_table):
    assert list(features.label_blocks(block_table, REF, 3)) == [0, 0, 1, 0]
    assert list(features.label_blocks(block_table, datetime.date(2013, 1, 1), 3)) \
        == [1, 0, 0, 0]


def test_label_window_past_data_end(block_table):
    with pytest.raises(FeatureError):
        features.label_blocks(block_table, datetime.date(2014, 1, 1), 3)
    assert features.label_blocks(block_table, datetime.date(2014, 1, 1), 3,
                                 deployment=True) is None


def test_reference_outside_coverage(block_table, feature_spec):
    with pytest.raises(FeatureError):
        features.build_features(block_table, feature_spec, datetime.date(2020, 1, 1))
    with pytest.raises(FeatureError):
        features.build_features(block_table, feature_spec, datetime.date(2004, 6, 1))


def test_future_break_changes_no_feature(block_table, feature_spec):
    before = features.build_features(block_table, feature_spec, REF)
    future = ingest.BreakEvent(99, datetime.date(2012, 5, 5), geo.Point2(20.0, 0.0))
    blocks = tuple(replace(b, breaks=b.breaks + (future,)) if b.block_id == 1 else b
                   for b in block_table.blocks)
    after = features.build_features(replace(block_table, blocks=blocks), feature_spec, REF)
    assert np.array_equal(before.values, after.values)


def test_build_labeled_matrix_and_pool(block_table, feature_spec):
    spec = features.freeze_vocabularies(block_table, feature_spec)
    first = features.build_labeled_matrix(block_table, spec, features.reference_date_for(2011))
    second = features.build_labeled_matrix(block_table, spec,
                                           features.reference_date_for(2012))
    pooled = features.pool_matrices([first, second])
    assert len(pooled) == 8
    assert list(pooled.labels) == [0, 0, 1, 0, 0, 0, 1, 0]
    assert pooled.reference_dates[4] == datetime.date(2012, 1, 1)
    with pytest.raises(FeatureError):
        pooled.reference_date
    with pytest.raises(FeatureError):
        features.pool_matrices([first, first.with_labels(None)])


def test_matrix_column_lookup():
    matrix = make_matrix([[1, 2], [3, 4]], ["a", "b"])
    assert list(matrix.column("b")) == [2, 4]
    with pytest.raises(FeatureError):
        matrix.column("c")


def test_features_file_round_trip(block_table, feature_spec, tmp_path):
    matrix = features.build_labeled_matrix(block_table, feature_spec, REF)
    values = matrix.values.copy()
    values[:, 0] = values[:, 0] / 3.0
    matrix = replace(matrix, values=values)
    path = tmp_path / "features.csv"
    features.write_features(matrix, path)
    loaded = features.read_features(path)
    assert loaded.columns == matrix.columns
    assert np.array_equal(loaded.values, matrix.values)
    assert np.array_equal(loaded.labels, matrix.labels)
    assert np.array_equal(loaded.block_ids, matrix.block_ids)
    assert loaded.reference_date == REF


def test_window_counts_grow_with_window(small_synth):
    raw, _, _ = small_synth
    table = ingest.build_block_table(raw, 25.0)
    spec = features.FeatureSpec()
    for year in range(2011, 2016):
        matrix = features.build_features(table, spec, datetime.date(year, 1, 1))
        counts = np.column_stack([matrix.column(features.window_column(w))
                                  for w in spec.windows])
        assert np.all(np.diff(counts, axis=1) >= 0)
        assert counts[:, -1].sum() > 0


def test_events_after_reference_never_reach_features(block_table, feature_spec):
    before = features.build_features(block_table, feature_spec, REF)

    def rewrite(event):
        if event.date < REF:
            return event
        return replace(event, date=datetime.date(2014, 2, 2), point=geo.Point2(150.0, 5.0))

    moved = tuple(replace(b, breaks=tuple(rewrite(e) for e in b.breaks))
                  for b in block_table.blocks)
    dropped = tuple(replace(b, breaks=tuple(e for e in b.breaks if e.date < REF))
                    for b in block_table.blocks)
    assert moved != block_table.blocks and dropped != block_table.blocks
    for blocks in (moved, dropped):
        after = features.build_features(replace(block_table, blocks=blocks), feature_spec, REF)
        assert after.columns == before.columns
        assert np.array_equal(after.block_ids, before.block_ids)
        assert before.values.tobytes() == after.values.tobytes()


def test_five_and_one_year_windows(block_table):
    spec = features.FeatureSpec(windows=(1, 5), lookback=5)
    history = (ingest.BreakEvent(101, datetime.date(2010, 5, 1), geo.Point2(100.0, 0.0)),
               ingest.BreakEvent(102, datetime.date(2012, 11, 30), geo.Point2(200.0, 0.0)))
    blocks = tuple(replace(b, breaks=history) if b.block_id == 1 else b
                   for b in block_table.blocks)
    matrix = features.build_features(replace(block_table, blocks=blocks), spec,
                                     datetime.date(2013, 1, 1))
    frame = matrix.to_frame().set_index("block_id")
    assert frame.loc[1, "breaks_5y"] == 2
    assert frame.loc[1, "breaks_1y"] == 1
