"""Load, validate, impute and aggregate raw city records into a per-block table.

Row-level problems become Reject entries; only whole-file problems raise IngestError.
"""
from collections import defaultdict
from dataclasses import dataclass, field, replace
import datetime
import logging
import math
import os

import isodate
import numpy as np
import pandas as pd

from mainbreak import CONFIG
from . import geo
from .error import GeometryError, IngestError
from .utils import format_value, write_csv


logger = logging.getLogger(__name__)

MAIN_BREAK = "main_break"
OTHER = "other"
UNKNOWN_MATERIAL = "unknown"


#######################################
# Records
#######################################

@dataclass(frozen=True)
class WorkOrder:
    event_id: int
    date: datetime.date
    description: str
    kind: str
    main_id: int = None
    location: geo.Point2 = None
    # Source line in work_orders.csv, 0 when built in memory
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class MainSegment:
    main_id: int
    geometry: geo.Polyline
    diameter: float = None
    material: str = None
    install_year: int = None


@dataclass(frozen=True)
class BlockRecord:
    block_id: int
    street_id: str
    label: str
    geometry: geo.Polyline
    soil_type: str
    rock_type: str
    pressure_zone: str
    # Sorted (year, rating) pairs; rating 0 means unrated
    road_ratings: tuple = ()


@dataclass(frozen=True)
class ParcelRecord:
    block_id: int
    first_tax_year: int


@dataclass(frozen=True)
class NotebookEntry:
    street_id: str
    material: str
    diameter: float


@dataclass(frozen=True)
class Reject:
    file: str
    row: int
    reason: str


@dataclass(frozen=True)
class RawCity:
    blocks: tuple
    mains: tuple
    work_orders: tuple
    parcels: tuple
    notebook: tuple
    # Inclusive (first_year, last_year) of data coverage
    data_range: tuple
    rejects: tuple = field(default=(), compare=False)
    counts: dict = field(default_factory=dict, compare=False)


class _RowRejected(Exception):
    pass


#######################################
# Field parsing
#######################################

def _require(row, name):
    value = row.get(name, "")
    if value == "":
        raise _RowRejected(f"missing {name}")
    return value


def _parse_id(value, name):
    try:
        parsed = int(value)
    except ValueError:
        raise _RowRejected(f"{name} '{value}' is not an integer id")
    if parsed < 0:
        raise _RowRejected(f"{name} {parsed} is negative")
    return parsed


def _parse_year(value, name, bounds=None):
    try:
        year = int(value)
    except ValueError:
        raise _RowRejected(f"{name} '{value}' is not a year")
    if bounds is not None and not bounds[0] <= year <= bounds[1]:
        raise _RowRejected(f"{name} {year} outside [{bounds[0]}, {bounds[1]}]")
    return year


def _parse_positive(value, name):
    try:
        parsed = float(value)
    except ValueError:
        raise _RowRejected(f"{name} '{value}' is not a number")
    if not math.isfinite(parsed) or parsed <= 0:
        raise _RowRejected(f"{name} must be positive, got {value}")
    return parsed


def parse_material(value):
    """Normalize a material spelling to the material enum.

    Returns None for a blank value; raises ValueError for an unrecognized one.
    """
    text = value.strip().lower()
    if not text:
        return None
    canonical = text.replace(" ", "_").replace("-", "_")
    if canonical in CONFIG["MATERIALS"]:
        return canonical
    if text in CONFIG["MATERIAL_ALIASES"]:
        return CONFIG["MATERIAL_ALIASES"][text]
    raise ValueError(f"unknown material '{value}'")


def _parse_material(value):
    try:
        return parse_material(value)
    except ValueError as e:
        raise _RowRejected(str(e))


def _in_bbox(point, bbox):
    return bbox is None or (bbox[0] <= point.x <= bbox[2] and bbox[1] <= point.y <= bbox[3])


def _parse_geometry(value, bbox):
    try:
        line = geo.parse_polyline(value)
    except GeometryError as e:
        raise _RowRejected(f"invalid geometry: {e}")
    if not all(_in_bbox(v, bbox) for v in line.vertices):
        raise _RowRejected("geometry outside the configured bounding box")
    return line


def classify_work_order(description, keywords=None):
    keywords = CONFIG["BREAK_KEYWORDS"] if keywords is None else keywords
    text = description.lower()
    return MAIN_BREAK if any(k.lower() in text for k in keywords) else OTHER


#######################################
# File reading
#######################################

def _read_rows(data_dir, key, parse_row, threshold):
    """Read one input file, parsing each row; return (records, rejects)."""
    spec = CONFIG["CSV_FILES"][key]
    filename = spec["file"]
    path = os.path.join(data_dir, filename)
    if not os.path.isfile(path):
        raise IngestError(f"Required file not found at '{path}'", file=filename)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise IngestError(f"Unreadable CSV: {e}", file=filename)
    missing = [col for col in spec["required"] if col not in frame.columns]
    if missing:
        raise IngestError(f"Malformed header, missing columns {missing}", file=filename)
    for col in spec["optional"]:
        if col not in frame.columns:
            frame[col] = ""

    records = []
    rejects = []
    # Header is line 1
    for line, row in enumerate(frame.to_dict("records"), start=2):
        row = {name: str(value).strip() for name, value in row.items()}
        try:
            records.append((line, parse_row(row)))
        except _RowRejected as e:
            rejects.append(Reject(filename, line, str(e)))
            logger.debug(f"{filename} row {line} rejected: {e}")

    return records, rejects


def _check_reject_share(filename, accepted, rejects, threshold):
    total = accepted + len(rejects)
    if total and len(rejects) / total > threshold:
        first = min(rejects, key=lambda r: r.row)
        raise IngestError(f"{len(rejects)} of {total} rows rejected "
                          f"(limit {threshold:.0%}); first: {first.reason}",
                          file=filename)
    logger.info(f"{filename}: {accepted} accepted, {len(rejects)} rejected")


def _check_unique(records, key, name, filename):
    seen = set()
    for line, record in records:
        value = getattr(record, key)
        if value in seen:
            raise IngestError(f"Duplicate {name} {value}", file=filename, row=line)
        seen.add(value)


def load_raw_city(data_dir, data_start_year=None, data_end_year=None, bbox=None,
                  break_keywords=None, reject_threshold=None):
    """Parse and validate every input CSV in data_dir.

    Arguments:
        data_dir (str): Directory holding the six input files.
        data_start_year (int): First year of coverage. Work orders before it are rejected.
                Default None, to infer from work order dates.
        data_end_year (int): Last year (inclusive) of coverage.
                Default None, to infer from work order dates.
        bbox (list): [min_x, min_y, max_x, max_y] accepted coordinates, in feet.
                Default None, to accept any finite coordinate.
        break_keywords (list): Description keywords marking main breaks.
                Default None, to use the configured keywords.
        reject_threshold (float): Rejected share of any one file that aborts ingest.
                Default None, to use the configured threshold.

    Returns:
        RawCity: The validated records, with rejects and per-file counts.
    """
    threshold = CONFIG["REJECT_THRESHOLD"] if reject_threshold is None else reject_threshold
    files = CONFIG["CSV_FILES"]
    year_bounds = tuple(CONFIG["INSTALL_YEAR_BOUNDS"])
    all_rejects = []
    counts = {}

    def tally(key, records, rejects):
        # Duplicates found after parsing count toward the threshold too
        _check_reject_share(files[key]["file"], len(records), rejects, threshold)
        counts[files[key]["file"]] = {"accepted": len(records), "rejected": len(rejects)}
        all_rejects.extend(rejects)

    # Blocks
    def parse_block(row):
        return BlockRecord(block_id=_parse_id(_require(row, "block_id"), "block_id"),
                           street_id=_require(row, "street_id"),
                           label=_require(row, "label"),
                           geometry=_parse_geometry(_require(row, "geometry"), bbox),
                           soil_type=_require(row, "soil_type"),
                           rock_type=_require(row, "rock_type"),
                           pressure_zone=_require(row, "pressure_zone"))

    block_rows, rejects = _read_rows(data_dir, "blocks", parse_block, threshold)
    _check_unique(block_rows, "block_id", "block_id", files["blocks"]["file"])
    tally("blocks", block_rows, rejects)
    block_ids = {block.block_id for _, block in block_rows}
    if not block_ids:
        raise IngestError("No valid blocks", file=files["blocks"]["file"])

    # Mains
    def parse_main(row):
        diameter = row.get("diameter_in", "")
        year = row.get("install_year", "")
        return MainSegment(main_id=_parse_id(_require(row, "main_id"), "main_id"),
                           geometry=_parse_geometry(_require(row, "geometry"), bbox),
                           diameter=_parse_positive(diameter, "diameter_in") if diameter else None,
                           material=_parse_material(row.get("material", "")),
                           install_year=(_parse_year(year, "install_year", year_bounds)
                                         if year else None))

    main_rows, rejects = _read_rows(data_dir, "mains", parse_main, threshold)
    _check_unique(main_rows, "main_id", "main_id", files["mains"]["file"])
    tally("mains", main_rows, rejects)

    # Work orders
    def parse_work_order(row):
        event_id = _parse_id(_require(row, "event_id"), "event_id")
        try:
            date = isodate.parse_date(_require(row, "date"))
        except (ValueError, isodate.ISO8601Error):
            raise _RowRejected(f"date '{row['date']}' is not YYYY-MM-DD")
        if data_start_year is not None and date.year < data_start_year:
            raise _RowRejected(f"date {date} before data start {data_start_year}")
        if data_end_year is not None and date.year > data_end_year:
            raise _RowRejected(f"date {date} after data end {data_end_year}")
        has_main = row.get("main_id", "") != ""
        has_x, has_y = row.get("x", "") != "", row.get("y", "") != ""
        if has_main and (has_x or has_y):
            raise _RowRejected("both main_id and coordinates given")
        if not has_main and not (has_x and has_y):
            raise _RowRejected("no complete location (main_id or x and y)")
        main_id, location = None, None
        if has_main:
            main_id = _parse_id(row["main_id"], "main_id")
        else:
            try:
                location = geo.Point2(float(row["x"]), float(row["y"]))
            except (ValueError, GeometryError):
                raise _RowRejected(f"invalid coordinates ({row['x']}, {row['y']})")
            if not _in_bbox(location, bbox):
                raise _RowRejected("coordinates outside the configured bounding box")
        description = row.get("description", "")
        return WorkOrder(event_id=event_id, date=date, description=description,
                         kind=classify_work_order(description, break_keywords),
                         main_id=main_id, location=location)

    order_rows, rejects = _read_rows(data_dir, "work_orders", parse_work_order, threshold)
    order_rows = [(line, replace(order, line=line)) for line, order in order_rows]
    _check_unique(order_rows, "event_id", "event_id", files["work_orders"]["file"])
    tally("work_orders", order_rows, rejects)

    # Road ratings
    rating_filename = files["road_ratings"]["file"]

    def parse_rating(row):
        block_id = _parse_id(_require(row, "block_id"), "block_id")
        if block_id not in block_ids:
            raise _RowRejected(f"unknown block_id {block_id}")
        year = _parse_year(_require(row, "year"), "year")
        try:
            rating = int(_require(row, "rating"))
        except ValueError:
            raise _RowRejected(f"rating '{row['rating']}' is not an integer")
        if not 0 <= rating <= 10:
            raise _RowRejected(f"rating {rating} outside 0-10")
        return (block_id, year, rating)

    rating_rows, rejects = _read_rows(data_dir, "road_ratings", parse_rating, threshold)
    ratings = defaultdict(dict)
    kept = []
    for line, (block_id, year, rating) in rating_rows:
        if year in ratings[block_id]:
            rejects.append(Reject(rating_filename, line, f"duplicate rating for block "
                                                         f"{block_id} in {year}"))
            continue
        ratings[block_id][year] = rating
        kept.append((line, (block_id, year, rating)))
    tally("road_ratings", kept, rejects)

    # Parcels
    def parse_parcel(row):
        block_id = _parse_id(_require(row, "block_id"), "block_id")
        if block_id not in block_ids:
            raise _RowRejected(f"unknown block_id {block_id}")
        return ParcelRecord(block_id=block_id,
                            first_tax_year=_parse_year(_require(row, "first_tax_year"),
                                                       "first_tax_year", year_bounds))

    parcel_rows, rejects = _read_rows(data_dir, "parcels", parse_parcel, threshold)
    tally("parcels", parcel_rows, rejects)

    # Field notebook lookups
    notebook_filename = files["notebook"]["file"]

    def parse_notebook(row):
        material = _parse_material(_require(row, "material"))
        return NotebookEntry(street_id=_require(row, "street_id"), material=material,
                             diameter=_parse_positive(_require(row, "diameter_in"),
                                                      "diameter_in"))

    notebook_rows, rejects = _read_rows(data_dir, "notebook", parse_notebook, threshold)
    notebook = {}
    for line, entry in notebook_rows:
        if entry.street_id in notebook:
            rejects.append(Reject(notebook_filename, line,
                                  f"duplicate notebook entry for street {entry.street_id}"))
            continue
        notebook[entry.street_id] = entry
    tally("notebook", list(notebook.values()), rejects)

    # Data coverage
    work_orders = sorted((order for _, order in order_rows), key=lambda o: o.event_id)
    years = [order.date.year for order in work_orders]
    start = data_start_year if data_start_year is not None else (min(years) if years else None)
    end = data_end_year if data_end_year is not None else (max(years) if years else None)
    if start is None or end is None:
        raise IngestError("Cannot infer data coverage without work orders; "
                          "set data_start_year and data_end_year",
                          file=files["work_orders"]["file"])
    if end < start:
        raise IngestError(f"Data coverage {start}-{end} is empty")

    blocks = tuple(replace(block, road_ratings=tuple(sorted(ratings[block.block_id].items())))
                   for _, block in sorted(block_rows, key=lambda item: item[1].block_id))
    return RawCity(blocks=blocks,
                   mains=tuple(sorted((main for _, main in main_rows),
                                      key=lambda m: m.main_id)),
                   work_orders=tuple(work_orders),
                   parcels=tuple(sorted((parcel for _, parcel in parcel_rows),
                                        key=lambda p: (p.block_id, p.first_tax_year))),
                   notebook=tuple(notebook[street] for street in sorted(notebook)),
                   data_range=(start, end),
                   rejects=tuple(all_rejects),
                   counts=counts)


#######################################
# Block table
#######################################

@dataclass(frozen=True)
class BreakEvent:
    event_id: int
    date: datetime.date
    point: geo.Point2


@dataclass(frozen=True)
class BlockAttributes:
    block_id: int
    street_id: str
    label: str
    geometry: geo.Polyline
    soil_type: str
    rock_type: str
    pressure_zone: str
    road_ratings: tuple = ()
    main_ids: tuple = ()
    main_length: float = 0.0
    install_year: int = None
    install_year_source: str = None
    material: str = None
    material_source: str = None
    diameter: float = None
    diameter_source: str = None
    breaks: tuple = ()

    @property
    def main_less(self):
        return not self.main_ids

    @property
    def install_year_imputed(self):
        return self.install_year_source == "median"

    @property
    def diameter_imputed(self):
        return self.diameter_source == "median"


@dataclass(frozen=True)
class BlockTable:
    blocks: tuple
    # Inclusive (first_year, last_year) of data coverage
    data_range: tuple
    rejects: tuple = field(default=(), compare=False)

    @property
    def coverage_start(self):
        return datetime.date(self.data_range[0], 1, 1)

    @property
    def coverage_end(self):
        """First day after coverage."""
        return datetime.date(self.data_range[1] + 1, 1, 1)

    def modeled(self):
        return [block for block in self.blocks if not block.main_less]

    def break_events(self):
        """Every break as (event_id, date, point, block_id), ordered by event_id."""
        events = [(event.event_id, event.date, event.point, block.block_id)
                  for block in self.blocks for event in block.breaks]
        return sorted(events)


def _majority_material(weighted):
    """Pick the material with the largest summed weight; ties follow enum order."""
    totals = defaultdict(float)
    for material, weight in weighted:
        totals[material] += weight
    if not totals:
        return None
    order = CONFIG["MATERIALS"]
    return max(sorted(totals, key=order.index), key=lambda m: totals[m])


def propagate_street_values(blocks, fields=("install_year", "material", "diameter")):
    """Fill missing attributes of blocks on one street from their siblings.

    When siblings disagree: earliest install year, majority material by summed
    main length, smallest diameter.

    Arguments:
        blocks (list): BlockAttributes sharing one street_id.
        fields (tuple): The attributes to fill.
                Default all three.

    Returns:
        list: The blocks, in input order, with missing values filled where possible.
    """
    resolved = {}
    if "install_year" in fields:
        years = [b.install_year for b in blocks if b.install_year is not None]
        resolved["install_year"] = min(years) if years else None
    if "material" in fields:
        resolved["material"] = _majority_material(
            (b.material, b.main_length) for b in blocks
            if b.material is not None and b.material != UNKNOWN_MATERIAL)
    if "diameter" in fields:
        diameters = [b.diameter for b in blocks if b.diameter is not None]
        resolved["diameter"] = min(diameters) if diameters else None

    filled = []
    for block in blocks:
        updates = {}
        for name, value in resolved.items():
            if value is not None and getattr(block, name) is None:
                updates[name] = value
                updates[f"{name}_source"] = "street"
        filled.append(replace(block, **updates) if updates else block)
    return filled


def _by_street(blocks):
    streets = defaultdict(list)
    for block in blocks:
        streets[block.street_id].append(block)
    return streets


def _propagate(blocks, fields):
    filled = {}
    for street_blocks in _by_street(blocks).values():
        for block in propagate_street_values(street_blocks, fields):
            filled[block.block_id] = block
    return [filled[block.block_id] for block in blocks]


def _median_year(years):
    return int(math.floor(float(np.median(years)) + 0.5))


def impute_install_year(blocks, parcels):
    """Resolve an install year for every block.

    Precedence: earliest recorded year on the block's mains, earliest first tax
    year among the block's parcels, street propagation, then the global median
    of resolved years (source "median").

    Arguments:
        blocks (list): BlockAttributes, with install_year set from recorded mains.
        parcels (list): ParcelRecords.

    Returns:
        dict: block_id -> (install_year, source).
    """
    tax_years = defaultdict(list)
    for parcel in parcels:
        tax_years[parcel.block_id].append(parcel.first_tax_year)

    staged = []
    for block in blocks:
        if block.install_year is not None:
            staged.append(replace(block, install_year_source=block.install_year_source or "main"))
        elif tax_years[block.block_id]:
            staged.append(replace(block, install_year=min(tax_years[block.block_id]),
                                  install_year_source="parcel"))
        else:
            staged.append(block)
    staged = _propagate(staged, ("install_year",))

    known = [b.install_year for b in staged if b.install_year is not None]
    if len(known) < len(staged):
        if not known:
            raise IngestError("No install year can be resolved for any block")
        median = _median_year(known)
        logger.info(f"{len(staged) - len(known)} blocks take the median install year {median}")
        staged = [b if b.install_year is not None
                  else replace(b, install_year=median, install_year_source="median")
                  for b in staged]
    return {b.block_id: (b.install_year, b.install_year_source) for b in staged}


def impute_material(install_year, notebook, street_id,
                    cast_iron_before=None, ductile_iron_after=None):
    """Material implied by install era, or the street's notebook entry in between.

    Arguments:
        install_year (int): The resolved install year.
        notebook (dict): street_id -> NotebookEntry.
        street_id (str): The block's street.
        cast_iron_before (int): Years strictly before this are cast iron.
                Default None, to use the configured year.
        ductile_iron_after (int): Years strictly after this are ductile iron.
                Default None, to use the configured year.

    Returns:
        str: A material; "unknown" when the era is ambiguous and no entry exists.
    """
    cast_iron_before = CONFIG["CAST_IRON_BEFORE"] if cast_iron_before is None \
        else cast_iron_before
    ductile_iron_after = CONFIG["DUCTILE_IRON_AFTER"] if ductile_iron_after is None \
        else ductile_iron_after
    if install_year < cast_iron_before:
        return "cast_iron"
    if install_year > ductile_iron_after:
        return "ductile_iron"
    entry = notebook.get(street_id)
    if entry is not None and entry.material is not None:
        return entry.material
    return UNKNOWN_MATERIAL


def impute_blocks(blocks, parcels, notebook):
    """Run install year, material and diameter imputation over all blocks.

    Arguments:
        blocks (list): BlockAttributes carrying the values recorded on their mains.
        parcels (list): ParcelRecords.
        notebook (dict): street_id -> NotebookEntry.

    Returns:
        list: BlockAttributes with no absent install_year, material or diameter.
    """
    years = impute_install_year(blocks, parcels)
    blocks = [replace(b, install_year=years[b.block_id][0],
                      install_year_source=years[b.block_id][1]) for b in blocks]

    # Material: recorded, era rule or notebook, street, then unknown
    staged = []
    for block in blocks:
        if block.material is not None:
            staged.append(block)
            continue
        material = impute_material(block.install_year, notebook, block.street_id)
        if material == UNKNOWN_MATERIAL:
            staged.append(block)
        else:
            era = (block.install_year < CONFIG["CAST_IRON_BEFORE"]
                   or block.install_year > CONFIG["DUCTILE_IRON_AFTER"])
            staged.append(replace(block, material=material,
                                  material_source="era" if era else "notebook"))
    staged = _propagate(staged, ("material",))
    blocks = [b if b.material is not None
              else replace(b, material=UNKNOWN_MATERIAL, material_source="unknown")
              for b in staged]

    # Diameter: recorded, notebook, street, then median
    staged = []
    for block in blocks:
        entry = notebook.get(block.street_id)
        if block.diameter is None and entry is not None:
            staged.append(replace(block, diameter=entry.diameter, diameter_source="notebook"))
        else:
            staged.append(block)
    staged = _propagate(staged, ("diameter",))
    known = [b.diameter for b in staged if b.diameter is not None]
    if len(known) < len(staged):
        if not known:
            raise IngestError("No diameter can be resolved for any block")
        median = float(np.median(known))
        staged = [b if b.diameter is not None
                  else replace(b, diameter=median, diameter_source="median")
                  for b in staged]
    return staged


def aggregate_to_blocks(raw, assignment):
    """Aggregate mains and breaks to blocks and impute missing attributes.

    A block takes the earliest install year, the majority material by length and
    the smallest diameter recorded on its mains. Breaks located by main go to that
    main's block, or to the block line nearest the main's midpoint when the main
    is assigned to none; breaks with coordinates go to the nearest block line.

    Arguments:
        raw (RawCity): Validated records.
        assignment (geo.MainAssignment): Main to block mapping.

    Returns:
        BlockTable: One entry per block; blocks with no mains are kept but flagged.
    """
    mains = {main.main_id: main for main in raw.mains}
    block_mains = defaultdict(list)
    for main_id, block_id in sorted(assignment.blocks.items()):
        block_mains[block_id].append(mains[main_id])

    rejects = []
    filename = CONFIG["CSV_FILES"]["work_orders"]["file"]
    block_lines = [(block.block_id, block.geometry) for block in raw.blocks]
    block_breaks = defaultdict(list)
    for order in sorted(raw.work_orders, key=lambda o: o.event_id):
        if order.kind != MAIN_BREAK:
            continue
        if order.main_id is not None:
            if order.main_id not in mains:
                rejects.append(Reject(filename, order.line,
                                      f"event_id {order.event_id}: break references "
                                      f"unknown main_id {order.main_id}"))
                continue
            point = geo.point_along(mains[order.main_id].geometry, 0.5)
            if order.main_id in assignment.blocks:
                block_id = assignment.blocks[order.main_id]
            else:
                # Main overlaps no block buffer
                block_id = geo.nearest_line(point, block_lines)
        else:
            block_id = geo.nearest_line(order.location, block_lines)
            point = order.location
        block_breaks[block_id].append(BreakEvent(order.event_id, order.date, point))
    if rejects:
        logger.info(f"{len(rejects)} break events could not be resolved to a block")

    blocks = []
    for record in sorted(raw.blocks, key=lambda b: b.block_id):
        assigned = block_mains[record.block_id]
        lengths = [geo.polyline_length(m.geometry) for m in assigned]
        years = [m.install_year for m in assigned if m.install_year is not None]
        diameters = [m.diameter for m in assigned if m.diameter is not None]
        material = _majority_material(
            (m.material, length) for m, length in zip(assigned, lengths)
            if m.material is not None and m.material != UNKNOWN_MATERIAL)
        blocks.append(BlockAttributes(
            block_id=record.block_id, street_id=record.street_id, label=record.label,
            geometry=record.geometry, soil_type=record.soil_type,
            rock_type=record.rock_type, pressure_zone=record.pressure_zone,
            road_ratings=record.road_ratings,
            main_ids=tuple(m.main_id for m in assigned),
            main_length=float(sum(lengths)),
            install_year=min(years) if years else None,
            install_year_source="main" if years else None,
            material=material,
            material_source="main" if material is not None else None,
            diameter=min(diameters) if diameters else None,
            diameter_source="main" if diameters else None,
            breaks=tuple(sorted(block_breaks[record.block_id],
                                key=lambda e: (e.date, e.event_id)))))

    notebook = {entry.street_id: entry for entry in raw.notebook}
    blocks = impute_blocks(blocks, raw.parcels, notebook)
    main_less = sum(1 for b in blocks if b.main_less)
    if main_less:
        logger.info(f"{main_less} blocks have no mains and are excluded from modeling")
    return BlockTable(blocks=tuple(blocks), data_range=raw.data_range,
                      rejects=tuple(raw.rejects) + tuple(rejects))


def build_block_table(raw, halfwidth):
    """Assign mains to blocks by buffered overlap, then aggregate."""
    assignment = geo.assign_mains_to_blocks(
        [(main.main_id, main.geometry) for main in raw.mains],
        [(block.block_id, block.geometry) for block in raw.blocks],
        halfwidth)
    return aggregate_to_blocks(raw, assignment)


#######################################
# Writers
#######################################

def write_raw_city(raw, out_dir):
    """Write the normalized form of every input file, loadable by load_raw_city."""
    os.makedirs(out_dir, exist_ok=True)
    files = CONFIG["CSV_FILES"]
    fmt = format_value

    def columns(key):
        return files[key]["required"] + files[key]["optional"]

    def path(key):
        return os.path.join(out_dir, files[key]["file"])

    write_csv([[fmt(o.event_id), o.date.isoformat(), o.description, fmt(o.main_id),
                fmt(o.location.x if o.location else None),
                fmt(o.location.y if o.location else None)] for o in raw.work_orders],
              columns("work_orders"), path("work_orders"))
    write_csv([[fmt(m.main_id), geo.format_polyline(m.geometry), fmt(m.diameter),
                fmt(m.material), fmt(m.install_year)] for m in raw.mains],
              columns("mains"), path("mains"))
    write_csv([[fmt(b.block_id), b.street_id, b.label, geo.format_polyline(b.geometry),
                b.soil_type, b.rock_type, b.pressure_zone] for b in raw.blocks],
              columns("blocks"), path("blocks"))
    write_csv([[fmt(b.block_id), fmt(year), fmt(rating)]
               for b in raw.blocks for year, rating in b.road_ratings],
              columns("road_ratings"), path("road_ratings"))
    write_csv([[fmt(p.block_id), fmt(p.first_tax_year)] for p in raw.parcels],
              columns("parcels"), path("parcels"))
    write_csv([[n.street_id, fmt(n.material), fmt(n.diameter)] for n in raw.notebook],
              columns("notebook"), path("notebook"))


def latest_rating(block, before_year):
    """Rating from the latest survey year before before_year; 0 when none."""
    earlier = [rating for year, rating in block.road_ratings if year < before_year]
    return earlier[-1] if earlier else 0


def write_block_table(table, path):
    fmt = format_value
    columns = ["block_id", "street_id", "label", "install_year", "install_year_source",
               "material", "material_source", "diameter_in", "diameter_source",
               "soil_type", "rock_type", "pressure_zone", "main_ids", "main_length_ft",
               "main_less", "n_breaks", "latest_road_rating"]
    rows = [[fmt(b.block_id), b.street_id, b.label, fmt(b.install_year),
             fmt(b.install_year_source), fmt(b.material), fmt(b.material_source),
             fmt(b.diameter), fmt(b.diameter_source), b.soil_type, b.rock_type,
             b.pressure_zone, " ".join(str(m) for m in b.main_ids), fmt(b.main_length),
             str(b.main_less).lower(), str(len(b.breaks)),
             fmt(latest_rating(b, table.data_range[1] + 1))]
            for b in table.blocks]
    write_csv(rows, columns, path)


def write_rejects(rejects, path):
    write_csv([[str(r.row), r.file, r.reason] for r in rejects],
              ["row", "file", "reason"], path)
