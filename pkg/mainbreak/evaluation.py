"""Temporal cross-validation, top-k ranking metrics, baselines and calibration."""
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
import json
import logging
import math

import isodate
import jsonschema
import numpy as np

from mainbreak import CONFIG
from . import features, gbdt
from .error import ConfigurationError, FeatureError, InternalError, ModelError, PlanError
from .ingest import build_block_table, latest_rating
from .utils import format_value, write_csv


logger = logging.getLogger(__name__)

MODEL_STRATEGY = "gbdt"
BASELINE_STRATEGIES = ("single_tree", "past_breaks", "pipe_age", "random")
STRATEGIES = (MODEL_STRATEGY,) + BASELINE_STRATEGIES
# Depth of the single regression tree baseline
SINGLE_TREE_DEPTH = 3


#######################################
# Split planning
#######################################

@dataclass(frozen=True)
class Split:
    test_year: int
    train_years: tuple


@dataclass(frozen=True)
class SplitPlan:
    splits: tuple
    horizon: int
    lookback: int
    data_range: tuple

    @property
    def test_years(self):
        return tuple(split.test_year for split in self.splits)


def make_split_plan(data_range, horizon=3, lookback=6):
    """Plan every temporal train/test split the data supports.

    A test year T needs its whole label window [T, T + horizon) inside the data.
    Its training reference years T' have label windows closing by T and a full
    lookback of history after the data start.

    Arguments:
        data_range (tuple): Inclusive (first_year, last_year) of coverage.
        horizon (int): Label window in years.
                Default 3.
        lookback (int): Feature history in years.
                Default 6.

    Returns:
        SplitPlan: Splits ordered by test year.
    """
    start, end = data_range
    minimum = lookback + 2 * horizon
    span = end - start + 1
    if span < minimum:
        raise PlanError(f"Data range {start}-{end} spans {span} years; at least {minimum} "
                        f"(lookback {lookback} + 2 x horizon {horizon}) are needed")
    first_train = start + lookback
    splits = []
    for test_year in range(first_train + horizon, end + 2 - horizon):
        train_years = tuple(range(first_train, test_year - horizon + 1))
        splits.append(Split(test_year=test_year, train_years=train_years))
    return SplitPlan(splits=tuple(splits), horizon=horizon, lookback=lookback,
                     data_range=(start, end))


#######################################
# Ranking metrics
#######################################

def top_k_count(n_blocks, percent):
    """floor(n_blocks * percent / 100), at least 1."""
    if n_blocks < 1:
        raise ConfigurationError(f"Need at least one block, got {n_blocks}")
    if not 0 < percent <= 100:
        raise ConfigurationError(f"Percent must be in (0, 100], got {percent}")
    # Decimal text of the percent, so 0.3 means exactly 3/10
    k = math.floor(Fraction(n_blocks) * Fraction(str(percent)) / 100)
    return max(1, int(k))


@dataclass(frozen=True, eq=False)
class RankedList:
    """Block ids by descending score; equal scores by ascending block_id."""
    block_ids: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.block_ids)

    def top(self, k):
        return self.block_ids[:k]


def rank_scores(block_ids, scores):
    block_ids = np.asarray(block_ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=float)
    order = np.lexsort((block_ids, -scores))
    return RankedList(block_ids=block_ids[order], scores=scores[order])


@dataclass(frozen=True)
class TopK:
    k: int
    hits: int
    positives: int
    precision: float
    recall: float
    # No positives at all; recall is reported as 0
    degenerate: bool = False


def _ranked_labels(ranked, labels):
    try:
        return np.array([labels[int(b)] for b in ranked.block_ids], dtype=float)
    except KeyError as e:
        raise FeatureError(f"No label for ranked block {e.args[0]}")


def precision_recall_at_k(ranked, labels, k):
    """Precision and recall of the top k blocks.

    Arguments:
        ranked (RankedList): The ranking.
        labels (dict): block_id -> 0/1 label, for every ranked block.
        k (int): How many top blocks to count. At most len(ranked).

    Returns:
        TopK: Hits, precision and recall; recall is 0 and degenerate is set
            when there are no positives.
    """
    if not 1 <= k <= len(ranked):
        raise ConfigurationError(f"k must be in [1, {len(ranked)}], got {k}")
    ordered = _ranked_labels(ranked, labels)
    hits = int(ordered[:k].sum())
    positives = int(ordered.sum())
    if positives == 0:
        return TopK(k=k, hits=hits, positives=0, precision=hits / k, recall=0.0,
                    degenerate=True)
    return TopK(k=k, hits=hits, positives=positives, precision=hits / k,
                recall=hits / positives)


def precision_recall_curve(ranked, labels):
    """Precision and recall at every k from 1 to len(ranked).

    Returns:
        tuple: (k, precision, recall) arrays; recall is all 0 without positives.
    """
    ordered = _ranked_labels(ranked, labels)
    ks = np.arange(1, len(ordered) + 1)
    hits = np.cumsum(ordered)
    positives = ordered.sum()
    recall = hits / positives if positives else np.zeros(len(ks))
    return ks, hits / ks, recall


#######################################
# Baselines
#######################################

def baseline_rank(strategy, matrix, seed=0, train_matrix=None, min_samples_leaf=5):
    """Rank the matrix's blocks by a baseline strategy.

    Arguments:
        strategy (str): One of random, pipe_age, past_breaks, single_tree.
        matrix (FeatureMatrix): Features for the split's reference date.
        seed (int): Seed of the random shuffle.
                Default 0.
        train_matrix (FeatureMatrix): Labeled training rows; needed by single_tree.
                Default None.
        min_samples_leaf (int): Leaf minimum of the single tree.
                Default 5.

    Returns:
        RankedList: Ties broken by ascending block_id.
    """
    if strategy == "random":
        ids = np.sort(np.asarray(matrix.block_ids, dtype=np.int64))
        shuffled = np.random.default_rng(seed).permutation(ids)
        return RankedList(block_ids=shuffled,
                          scores=np.arange(len(ids), 0, -1, dtype=float))
    if strategy == "pipe_age":
        return rank_scores(matrix.block_ids, matrix.column("pipe_age"))
    if strategy == "past_breaks":
        return rank_scores(matrix.block_ids,
                           matrix.column(features.window_column(math.inf)))
    if strategy == "single_tree":
        if train_matrix is None or train_matrix.labels is None:
            raise ModelError("The single_tree baseline needs labeled training rows")
        tree = gbdt.fit_tree(train_matrix.values, train_matrix.labels,
                             SINGLE_TREE_DEPTH, min_samples_leaf)
        return rank_scores(matrix.block_ids, np.clip(tree.predict(matrix.values), 0.0, 1.0))
    raise ConfigurationError(f"Unknown ranking strategy '{strategy}'; "
                             f"expected one of {list(BASELINE_STRATEGIES)}")


#######################################
# Calibration
#######################################

@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    # None for an empty bin
    mean_predicted: float
    mean_empirical: float
    count: int
    positives: int = 0


def reliability_curve(predictions, labels, bins=10):
    """Compare mean predicted and empirical probability over equal-width bins.

    Bin i covers [i/bins, (i+1)/bins); the last bin is closed at 1.
    """
    if bins < 2:
        raise ConfigurationError(f"Need at least 2 bins, got {bins}")
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape:
        raise ModelError(f"{p.shape[0]} predictions for {y.shape[0]} labels")
    if np.any((p < 0) | (p > 1)):
        raise ModelError("Predictions must lie in [0, 1]")
    if not np.all((y == 0) | (y == 1)):
        raise ModelError("Labels must be 0 or 1")
    index = np.minimum(np.floor(p * bins).astype(int), bins - 1)
    curve = []
    for i in range(bins):
        members = index == i
        count = int(members.sum())
        positives = int(y[members].sum())
        curve.append(ReliabilityBin(
            lower=i / bins, upper=(i + 1) / bins,
            mean_predicted=float(p[members].mean()) if count else None,
            mean_empirical=positives / count if count else None,
            count=count, positives=positives))
    return curve


#######################################
# Experiments
#######################################

@dataclass(frozen=True)
class SplitResult:
    test_year: int
    train_years: tuple
    strategy: str
    k: int
    n_blocks: int
    precision: float
    recall: float
    hits: int
    positives: int
    degenerate: bool


@dataclass(frozen=True)
class RankingRow:
    block_id: int
    label: str
    road_rating: int
    risk_score: int
    probability: float


@dataclass(eq=False)
class ExperimentReport:
    config: dict
    percent: float
    splits: list
    mean: dict
    final_split: dict
    importances: dict
    reliability: list
    # (test_year, k, precision, recall) for the model on every split
    pr_curve: list = field(default_factory=list)
    # Model ranking of the final split's test blocks
    rankings: list = field(default_factory=list)
    # Final split's labeled test matrix
    test_features: features.FeatureMatrix = None

    def to_dict(self):
        doc = {
            "config": dict(self.config),
            "percent": self.percent,
            "splits": [dict(asdict(r), train_years=list(r.train_years)) for r in self.splits],
            "mean": self.mean,
            "final_split": self.final_split,
            "importances": self.importances,
            "reliability": [asdict(b) for b in self.reliability]
        }
        try:
            jsonschema.validate(doc, CONFIG["REPORT_SCHEMA"])
        except jsonschema.ValidationError as e:
            raise InternalError(f"Report failed validation: {str(e).splitlines()[0]}")
        return doc


def split_seed(seed, year):
    """Independent per-split seed derived from the run seed."""
    return int(np.random.SeedSequence([seed, year]).generate_state(1)[0])


def ranking_rows(table, ranked, probabilities, as_of_year):
    """Rows of a ranking file in ranked order.

    Arguments:
        table (BlockTable): Supplies block labels and road ratings.
        ranked (RankedList): The ranking.
        probabilities (dict): block_id -> clamped model probability.
        as_of_year (int): Road ratings come from surveys before this year.
    """
    blocks = {block.block_id: block for block in table.blocks}
    rows = []
    for block_id in ranked.block_ids:
        block = blocks[int(block_id)]
        p = probabilities[int(block_id)]
        rows.append(RankingRow(block_id=int(block_id), label=block.label,
                               road_rating=latest_rating(block, as_of_year),
                               risk_score=int(math.floor(100 * p + 0.5)), probability=p))
    return rows


def _available(strategy, columns):
    needs = {"pipe_age": "pipe_age", "past_breaks": features.window_column(math.inf)}
    return strategy not in needs or needs[strategy] in columns


def _mean_metrics(results, strategies):
    means = {}
    for strategy in strategies:
        rows = [r for r in results if r.strategy == strategy]
        means[strategy] = {"precision": float(np.mean([r.precision for r in rows])),
                           "recall": float(np.mean([r.recall for r in rows])),
                           "hits": float(np.mean([r.hits for r in rows]))}
    return means


def evaluate_table(table, config, plan=None):
    """Run every split of the plan on an aggregated block table.

    Arguments:
        table (BlockTable): Aggregated, imputed blocks.
        config (dict): Resolved run config.
        plan (SplitPlan): The splits.
                Default None, to plan from the table's data range.

    Returns:
        ExperimentReport: Per-split and mean metrics for the model and every
            baseline, final-split importances, and reliability bins pooled over
            every split's test predictions.
    """
    spec = features.freeze_vocabularies(table, features.FeatureSpec.from_config(config))
    train_config = gbdt.TrainConfig.from_config(config)
    percent = float(config["percent"])
    if plan is None:
        plan = make_split_plan(table.data_range, spec.horizon, spec.lookback)
    if not plan.splits:
        raise PlanError(f"No valid split in data range {plan.data_range[0]}-"
                        f"{plan.data_range[1]}")

    years = sorted({y for split in plan.splits for y in split.train_years + (split.test_year,)})
    matrices = {year: features.build_labeled_matrix(table, spec,
                                                    features.reference_date_for(year))
                for year in years}
    strategies = [s for s in STRATEGIES if _available(s, spec.columns())]
    skipped = sorted(set(STRATEGIES) - set(strategies))
    if skipped:
        logger.warning(f"Baselines {skipped} need excluded feature columns; skipped")

    results = []
    pooled_predictions, pooled_labels = [], []
    pr_curve = []
    model = None
    rankings = []
    for split in plan.splits:
        train_matrix = features.pool_matrices([matrices[y] for y in split.train_years])
        test_matrix = matrices[split.test_year]
        seed = split_seed(train_config.seed, split.test_year)
        model = gbdt.train(train_matrix, replace(train_config, seed=seed))
        probabilities = gbdt.predict_matrix(model, test_matrix)
        labels = {int(b): label for b, label in zip(test_matrix.block_ids, test_matrix.labels)}
        k = top_k_count(len(test_matrix), percent)

        for strategy in strategies:
            if strategy == MODEL_STRATEGY:
                ranked = rank_scores(test_matrix.block_ids, probabilities)
            else:
                ranked = baseline_rank(strategy, test_matrix, seed=seed,
                                       train_matrix=train_matrix,
                                       min_samples_leaf=train_config.min_samples_leaf)
            topk = precision_recall_at_k(ranked, labels, k)
            results.append(SplitResult(test_year=split.test_year,
                                       train_years=split.train_years, strategy=strategy,
                                       k=k, n_blocks=len(test_matrix),
                                       precision=topk.precision, recall=topk.recall,
                                       hits=topk.hits, positives=topk.positives,
                                       degenerate=topk.degenerate))
            if strategy == MODEL_STRATEGY:
                if topk.degenerate:
                    logger.warning(f"Test year {split.test_year} has no positive blocks")
                logger.info(f"Test year {split.test_year}: P@{k} {topk.precision:.3f} "
                            f"({topk.hits}/{k}), R@{k} {topk.recall:.3f}, "
                            f"{len(train_matrix)} training rows")
                ks, precision, recall = precision_recall_curve(ranked, labels)
                pr_curve += [(split.test_year, int(a), float(b), float(c))
                             for a, b, c in zip(ks, precision, recall)]
                rankings = ranking_rows(table, ranked,
                                        {int(b): float(p) for b, p in
                                         zip(test_matrix.block_ids, probabilities)},
                                        split.test_year)
        pooled_predictions.append(probabilities)
        pooled_labels.append(test_matrix.labels)

    try:
        importances = gbdt.gini_importance(model)
    except ModelError as e:
        logger.warning(f"No importances for the final split: {e}")
        importances = {}
    final_year = plan.splits[-1].test_year
    final = {r.strategy: {"precision": r.precision, "recall": r.recall, "hits": r.hits}
             for r in results if r.test_year == final_year}
    return ExperimentReport(
        config=dict(config), percent=percent, splits=results,
        mean=_mean_metrics(results, strategies), final_split=final,
        importances=importances,
        reliability=reliability_curve(np.concatenate(pooled_predictions),
                                      np.concatenate(pooled_labels), int(config["bins"])),
        pr_curve=pr_curve, rankings=rankings, test_features=test_matrix)


def run_experiment(raw, config, plan=None):
    """Aggregate raw records to blocks, then evaluate every split.

    Arguments:
        raw (RawCity): Validated records.
        config (dict): Resolved run config.
        plan (SplitPlan): The splits.
                Default None, to plan from the data range.

    Returns:
        ExperimentReport: See evaluate_table.
    """
    table = build_block_table(raw, float(config["buffer_halfwidth"]))
    return evaluate_table(table, config, plan)


#######################################
# Deployment ranking
#######################################

def parse_as_of(value):
    try:
        return isodate.parse_date(value)
    except (ValueError, TypeError, isodate.ISO8601Error):
        raise ConfigurationError(f"as_of '{value}' is not an ISO date (YYYY-MM-DD)")


def rank_blocks(table, config, as_of):
    """Train on all history before as_of and rank every modeled block.

    Training pools every reference year whose label window closes on or before
    as_of and that has a full lookback of history.

    Arguments:
        table (BlockTable): Aggregated, imputed blocks.
        config (dict): Resolved run config.
        as_of (datetime.date): The ranking date; within the data coverage.

    Returns:
        tuple: (GbdtModel, list of RankingRow in ranked order).
    """
    spec = features.freeze_vocabularies(table, features.FeatureSpec.from_config(config))
    first_train = table.data_range[0] + spec.lookback
    train_years = [year for year in range(first_train, as_of.year + 1)
                   if features.shift_years(features.reference_date_for(year),
                                           spec.horizon) <= as_of]
    if not train_years:
        earliest = features.shift_years(features.reference_date_for(first_train), spec.horizon)
        raise PlanError(f"as_of {as_of} is before the earliest trainable date {earliest}")
    matrix = features.build_features(table, spec, as_of)
    train_matrix = features.pool_matrices(
        [features.build_labeled_matrix(table, spec, features.reference_date_for(year))
         for year in train_years])
    model = gbdt.train(train_matrix, gbdt.TrainConfig.from_config(config))
    probabilities = gbdt.predict_matrix(model, matrix)
    ranked = rank_scores(matrix.block_ids, probabilities)
    logger.info(f"Ranked {len(matrix)} blocks as of {as_of}, trained on reference years "
                f"{train_years[0]}-{train_years[-1]} ({len(train_matrix)} rows)")
    # Ratings surveyed in the as_of year count only from the following year
    rows = ranking_rows(table, ranked,
                        {int(b): float(p) for b, p in zip(matrix.block_ids, probabilities)},
                        as_of.year)
    return model, rows


#######################################
# Writers
#######################################

def write_report(report, path):
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_rankings(rows, path):
    write_csv([[str(r.block_id), r.label, str(r.road_rating), str(r.risk_score),
                format_value(r.probability)] for r in rows],
              ["block_id", "label", "road_rating", "risk_score", "probability"], path)


def write_reliability(curve, path):
    write_csv([[format_value(b.lower), format_value(b.upper), format_value(b.mean_predicted),
                format_value(b.mean_empirical), str(b.count), str(b.positives)]
               for b in curve],
              ["lower", "upper", "mean_predicted", "mean_empirical", "count", "positives"],
              path)


def write_pr_curve(rows, path):
    write_csv([[str(year), str(k), format_value(p), format_value(r)]
               for year, k, p, r in rows],
              ["test_year", "k", "precision", "recall"], path)
