# Input files and their columns
# "required" columns must be in the header; "optional" columns may be absent
# from the header entirely, or present with blank cells
CSV_FILES = {
    "work_orders": {
        "file": "work_orders.csv",
        "required": ["event_id", "date", "description"],
        "optional": ["main_id", "x", "y"]
    },
    "mains": {
        "file": "mains.csv",
        "required": ["main_id", "geometry"],
        "optional": ["diameter_in", "material", "install_year"]
    },
    "blocks": {
        "file": "blocks.csv",
        "required": ["block_id", "street_id", "label", "geometry",
                     "soil_type", "rock_type", "pressure_zone"],
        "optional": []
    },
    "road_ratings": {
        "file": "road_ratings.csv",
        "required": ["block_id", "year", "rating"],
        "optional": []
    },
    "parcels": {
        "file": "parcels.csv",
        "required": ["block_id", "first_tax_year"],
        "optional": []
    },
    "notebook": {
        "file": "notebook.csv",
        "required": ["street_id", "material", "diameter_in"],
        "optional": []
    }
}

INGEST_CONFIG = {
    "CSV_FILES": CSV_FILES,
    "BLOCK_TABLE_FILE": "block_table.csv",
    "REJECTS_FILE": "rejects.csv",
    # Job descriptions containing any of these (case-insensitive) are main breaks
    "BREAK_KEYWORDS": ["Main Break/Leak"],
    # Era rules for material: strictly before / strictly after
    "CAST_IRON_BEFORE": 1920,
    "DUCTILE_IRON_AFTER": 1960,
    # Spellings seen in field records, normalized to the material enum
    "MATERIAL_ALIASES": {
        "ci": "cast_iron",
        "cast iron": "cast_iron",
        "di": "ductile_iron",
        "ductile iron": "ductile_iron",
        "universal": "universal",
        "unk": "unknown"
    }
}
