"""Seeded synthetic cities with a known, self-exciting break process.

Blocks sit on parallel east-west streets, one main per block. Breaks are drawn
year by year from a logistic hazard in which recent breaks on the block raise the
odds of the next one. All randomness comes from one seed.
"""
from dataclasses import dataclass, replace
import datetime
import logging
import math
import os

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from mainbreak import CONFIG
from . import geo
from .error import ConfigurationError
from .ingest import (BlockRecord, MainSegment, NotebookEntry, ParcelRecord, RawCity,
                     WorkOrder, classify_work_order, write_raw_city)
from .utils import format_value, write_csv


logger = logging.getLogger(__name__)

BLOCK_LENGTH = 300.0  # Feet
STREET_SPACING = 400.0
# Mains run parallel to the street, this far off the centerline, stopping short of corners
MAIN_OFFSET = 10.0
MAIN_INSET = 5.0
REFERENCE_DIAMETER = 12.0  # Inches
DIAMETERS = (6.0, 8.0, 10.0, 12.0, 16.0)
SOIL_TYPES = ("clay", "loam", "sand", "silt")
ROCK_TYPES = ("limestone", "sandstone", "shale")
PRESSURE_ZONES = ("high", "low", "middle")
OTHER_JOBS = ("Hydrant Repair", "Meter Replacement", "Service Line Leak", "Valve Exercise")
BREAK_JOB = "Main Break/Leak"
HAZARD_BOUNDS = (0.001, 0.95)
# Half-width of the logit interval searched around the closed-form intercept
INTERCEPT_SEARCH = 20.0
# Breaks this many years back still raise the hazard
EXCITATION_YEARS = 5
RATING_INTERVAL = 2
TRUTH_FILE = "truth_hazards.csv"


@dataclass(frozen=True)
class SynthParams:
    blocks: int = 500
    blocks_per_street: int = 25
    start_year: int = 2004
    years: int = 12
    seed: int = 0
    # Share of mains whose recorded attributes are blanked
    blank_fraction: float = 0.98
    # Base 3-year block break rate the intercept is tuned to
    target_rate: float = 0.09
    w_past: float = 1.1  # Per break in the last EXCITATION_YEARS years
    w_age: float = 0.25  # Per decade of age
    w_diameter: float = 0.08  # Per inch below REFERENCE_DIAMETER
    w_cast_iron: float = 0.3
    w_universal: float = 0.2

    def __post_init__(self):
        if self.blocks < 1:
            raise ConfigurationError(f"Need at least one block, got {self.blocks}")
        if self.blocks_per_street < 1:
            raise ConfigurationError(f"Need at least one block per street, "
                                     f"got {self.blocks_per_street}")
        if self.years < 1:
            raise ConfigurationError(f"Need at least one simulated year, got {self.years}")
        if not 0 <= self.blank_fraction <= 1:
            raise ConfigurationError(f"blank_fraction must be in [0, 1], "
                                     f"got {self.blank_fraction}")
        if not 0 < self.target_rate < 1:
            raise ConfigurationError(f"target_rate must be in (0, 1), got {self.target_rate}")

    @classmethod
    def from_config(cls, config):
        return cls(**{name: config[name] for name in cls.__dataclass_fields__})

    @property
    def data_range(self):
        return (self.start_year, self.start_year + self.years - 1)

    @property
    def streets(self):
        return math.ceil(self.blocks / self.blocks_per_street)


@dataclass(frozen=True, eq=False)
class SynthCity:
    """A generated city; raw has no work orders until breaks are simulated."""
    raw: RawCity
    install_years: np.ndarray
    materials: tuple
    diameters: np.ndarray


@dataclass(frozen=True, eq=False)
class BreakHistory:
    work_orders: tuple
    years: tuple
    # (years, blocks) annual break probabilities, columns in block_id order
    hazards: np.ndarray
    breaks: np.ndarray
    intercept: float = 0.0


def _streams(seed):
    city, breaks = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(city), np.random.default_rng(breaks)


def _era_material(year, street_material):
    if year < CONFIG["CAST_IRON_BEFORE"]:
        return "cast_iron"
    if year > CONFIG["DUCTILE_IRON_AFTER"]:
        return "ductile_iron"
    return street_material


def generate_city(params):
    """Lay out the grid and draw every static attribute.

    Materials follow the install-era rule; streets installed between the era
    cutoffs get a notebook entry carrying their material and diameter. A
    blank_fraction share of mains have every recorded attribute blanked.
    """
    rng, _ = _streams(params.seed)
    n, per_street = params.blocks, params.blocks_per_street
    n_streets = params.streets
    last_year = params.start_year - 1

    street_era = rng.integers(1880, 1996, size=n_streets)
    street_material = rng.choice(["cast_iron", "ductile_iron", "universal"], size=n_streets,
                                 p=[0.4, 0.3, 0.3])
    street_diameter = rng.choice(DIAMETERS, size=n_streets)
    street_soil = rng.choice(SOIL_TYPES, size=n_streets)
    street_rock = rng.choice(ROCK_TYPES, size=n_streets)
    street_zone = rng.choice(PRESSURE_ZONES, size=n_streets)
    year_noise = rng.integers(0, 11, size=n)
    blanked = np.zeros(n, dtype=bool)
    n_blank = int(math.floor(params.blank_fraction * n + 0.5))
    blanked[rng.choice(n, size=n_blank, replace=False)] = True
    parcel_counts = rng.integers(0, 4, size=n)
    parcel_lags = rng.integers(0, 6, size=(n, 3))
    n_surveys = len(range(params.start_year, params.start_year + params.years,
                          RATING_INTERVAL))
    rating_noise = rng.normal(0.0, 1.0, size=(n_surveys, n))

    blocks, mains, parcels = [], [], []
    install_years = np.zeros(n, dtype=int)
    materials = []
    diameters = np.zeros(n, dtype=float)
    for b in range(n):
        street, position = divmod(b, per_street)
        block_id = b + 1
        y = street * STREET_SPACING
        x0, x1 = position * BLOCK_LENGTH, (position + 1) * BLOCK_LENGTH
        install_year = int(min(street_era[street] + year_noise[b], last_year))
        material = _era_material(install_year, str(street_material[street]))
        diameter = float(street_diameter[street])
        install_years[b] = install_year
        materials.append(material)
        diameters[b] = diameter

        ratings = []
        for s, year in enumerate(range(params.start_year, params.start_year + params.years,
                                       RATING_INTERVAL)):
            rating = round(9 - (year - install_year) / 20 + rating_noise[s, b])
            ratings.append((year, int(min(max(rating, 0), 10))))
        number = 100 * (position + 1)
        blocks.append(BlockRecord(block_id=block_id, street_id=f"S{street + 1:03d}",
                                  label=f"Street {street + 1}, {number}-{number + 98}",
                                  geometry=geo.Polyline(((x0, y), (x1, y))),
                                  soil_type=str(street_soil[street]),
                                  rock_type=str(street_rock[street]),
                                  pressure_zone=str(street_zone[street]),
                                  road_ratings=tuple(ratings)))
        line = geo.Polyline(((x0 + MAIN_INSET, y + MAIN_OFFSET),
                             (x1 - MAIN_INSET, y + MAIN_OFFSET)))
        if blanked[b]:
            mains.append(MainSegment(main_id=block_id, geometry=line))
        else:
            mains.append(MainSegment(main_id=block_id, geometry=line, diameter=diameter,
                                     material=material, install_year=install_year))
        for lag in parcel_lags[b, :parcel_counts[b]]:
            parcels.append(ParcelRecord(block_id=block_id,
                                        first_tax_year=int(min(install_year + lag, last_year))))

    notebook = []
    for street in range(n_streets):
        era = int(street_era[street])
        if CONFIG["CAST_IRON_BEFORE"] <= era <= CONFIG["DUCTILE_IRON_AFTER"]:
            notebook.append(NotebookEntry(street_id=f"S{street + 1:03d}",
                                          material=str(street_material[street]),
                                          diameter=float(street_diameter[street])))
    raw = RawCity(blocks=tuple(blocks), mains=tuple(mains), work_orders=(),
                  parcels=tuple(sorted(parcels, key=lambda p: (p.block_id, p.first_tax_year))),
                  notebook=tuple(notebook), data_range=params.data_range)
    logger.info(f"Generated {n} blocks on {n_streets} streets; "
                f"{n - n_blank} mains keep recorded attributes")
    return SynthCity(raw=raw, install_years=install_years, materials=tuple(materials),
                     diameters=diameters)


def hazard_intercept(params, static_terms):
    """Intercept giving the target 3-year rate to a block with mean static terms."""
    annual = 1 - (1 - params.target_rate) ** (1 / 3)
    return float(logit(annual)) - float(np.mean(static_terms))


def three_year_rate(broke):
    """Share of blocks with a break, averaged over consecutive 3-year windows."""
    starts = range(0, broke.shape[0] - 2, 3)
    return float(np.mean([broke[t:t + 3].any(axis=0).mean() for t in starts]))


def _run_hazards(intercept, draws, w_past, static_terms):
    n_years, n = draws.shape
    hazards = np.zeros((n_years, n))
    broke = np.zeros((n_years, n), dtype=bool)
    for t in range(n_years):
        recent = broke[max(0, t - EXCITATION_YEARS):t].sum(axis=0)
        z = intercept + w_past * recent + static_terms[t]
        hazards[t] = np.clip(expit(z), *HAZARD_BOUNDS)
        broke[t] = draws[t] < hazards[t]
    return hazards, broke


def calibrate_intercept(params, draws, static_terms):
    """Root-find the intercept whose simulated 3-year rate meets target_rate.

    The simulation reuses the given draws, and with non-negative weights the
    realized rate is non-decreasing in the intercept. Runs shorter than three
    years fall back to hazard_intercept.
    """
    start = hazard_intercept(params, static_terms[0])
    if draws.shape[0] < 3 or params.w_past < 0:
        return start

    def excess(intercept):
        _, broke = _run_hazards(intercept, draws, params.w_past, static_terms)
        return three_year_rate(broke) - params.target_rate

    low, high = start - INTERCEPT_SEARCH, start + INTERCEPT_SEARCH
    if excess(low) >= 0:
        return low
    if excess(high) <= 0:
        return high
    return float(brentq(excess, low, high, xtol=1e-6))


def simulate_breaks(city, params, intercept=None):
    """Draw breaks year by year and record each as a work order.

    The annual hazard of a block is logistic in (recent breaks, age in decades,
    diameter deficit, material), clamped to HAZARD_BOUNDS. Every uniform draw is
    taken before the simulation starts, so changing weights reuses the same
    random numbers.

    Arguments:
        city (SynthCity): The generated city.
        params (SynthParams): Weights and sizes; must match the city.
        intercept (float): Logistic intercept.
                Default None, to calibrate it so the realized 3-year block
                break rate meets params.target_rate.

    Returns:
        BreakHistory: Work orders ordered by date, plus the true hazards.
    """
    _, rng = _streams(params.seed)
    n, n_years = params.blocks, params.years
    years = tuple(range(params.start_year, params.start_year + n_years))
    draws = rng.random((n_years, n))
    positions = rng.random((n_years, n))
    days = rng.random((n_years, n))
    by_main = rng.random((n_years, n)) < 0.2
    n_other = max(1, n // 20)
    other_blocks = rng.integers(0, n, size=(n_years, n_other))
    other_days = rng.random((n_years, n_other))
    other_jobs = rng.integers(0, len(OTHER_JOBS), size=(n_years, n_other))
    other_positions = rng.random((n_years, n_other))

    deficit = np.maximum(REFERENCE_DIAMETER - city.diameters, 0.0)
    cast_iron = np.array([m == "cast_iron" for m in city.materials], dtype=float)
    universal = np.array([m == "universal" for m in city.materials], dtype=float)
    fixed = params.w_diameter * deficit + params.w_cast_iron * cast_iron \
        + params.w_universal * universal
    static_terms = np.array([params.w_age * (year - city.install_years) / 10.0 + fixed
                             for year in years])

    if intercept is None:
        intercept = calibrate_intercept(params, draws, static_terms)
    hazards, broke = _run_hazards(intercept, draws, params.w_past, static_terms)

    def day_of(year, u):
        length = (datetime.date(year + 1, 1, 1) - datetime.date(year, 1, 1)).days
        return datetime.date(year, 1, 1) + datetime.timedelta(days=int(u * length))

    blocks = city.raw.blocks
    mains = city.raw.mains
    records = []
    for t, year in enumerate(years):
        for b in np.flatnonzero(broke[t]):
            date = day_of(year, days[t, b])
            if by_main[t, b]:
                records.append((date, blocks[b].block_id, BREAK_JOB, mains[b].main_id, None))
            else:
                point = geo.point_along(blocks[b].geometry, positions[t, b])
                records.append((date, blocks[b].block_id, BREAK_JOB, None, point))
        for j in range(n_other):
            b = other_blocks[t, j]
            point = geo.point_along(blocks[b].geometry, other_positions[t, j])
            records.append((day_of(year, other_days[t, j]), blocks[b].block_id,
                            OTHER_JOBS[other_jobs[t, j]], None, point))
    records.sort(key=lambda r: (r[0], r[1], r[2]))
    work_orders = tuple(WorkOrder(event_id=i + 1, date=date, description=job,
                                  kind=classify_work_order(job), main_id=main_id,
                                  location=point)
                        for i, (date, _, job, main_id, point) in enumerate(records))
    logger.info(f"Simulated {int(broke.sum())} breaks over {n_years} years "
                f"({broke.sum() / n_years:.1f} a year, intercept {intercept:.3f})")
    return BreakHistory(work_orders=work_orders, years=years, hazards=hazards, breaks=broke,
                        intercept=intercept)


def synthesize(params):
    """Generate a city and its breaks; return (RawCity, BreakHistory)."""
    city = generate_city(params)
    history = simulate_breaks(city, params)
    return replace(city.raw, work_orders=history.work_orders), history


def write_truth(raw, history, path):
    rows = [[str(block.block_id), str(year), format_value(float(history.hazards[t, b]))]
            for t, year in enumerate(history.years) for b, block in enumerate(raw.blocks)]
    write_csv(rows, ["block_id", "year", "hazard"], path)


def write_synth_city(raw, history, out_dir):
    """Write the six input files and the true hazard table."""
    write_raw_city(raw, out_dir)
    write_truth(raw, history, os.path.join(out_dir, TRUTH_FILE))
