# utils/taxonomies.py
from typing import Dict, List, Optional, Tuple

# Number of categories in each published taxonomy.
TAXONOMIES: Dict[str, int] = {
    "google-topics-v1": 349,
    "google-topics-v2": 629,
    "google-nl-v2": 1091,
    "iab-audience-v1.1": 1679,
}

# Distinct topics observed in the two experimental browsing datasets.
OBSERVED_TAXONOMIES: Dict[str, int] = {
    "aol-citizen-lab": 31,
    "aol-google-v1": 169,
}

TAXONOMY_ALIASES: Dict[str, str] = {
    "v1": "google-topics-v1",
    "topics-v1": "google-topics-v1",
    "v2": "google-topics-v2",
    "topics-v2": "google-topics-v2",
    "nl": "google-nl-v2",
    "natural-language": "google-nl-v2",
    "iab": "iab-audience-v1.1",
    "citizen-lab": "aol-citizen-lab",
    "aol-v1": "aol-google-v1",
}

# Deployed Topics API parameters.
DEFAULT_S = 5
DEFAULT_R = 0.05

# (m, s, r) rows of the published taxonomy grid.
TABLE5_GRID: List[Tuple[int, int, float]] = [
    (TAXONOMIES["google-topics-v1"], DEFAULT_S, DEFAULT_R),
    (TAXONOMIES["google-topics-v2"], DEFAULT_S, DEFAULT_R),
    (TAXONOMIES["google-nl-v2"], DEFAULT_S, DEFAULT_R),
    (TAXONOMIES["iab-audience-v1.1"], DEFAULT_S, DEFAULT_R),
]

AOL_GRID: List[Tuple[int, int, float]] = [
    (OBSERVED_TAXONOMIES["aol-citizen-lab"], DEFAULT_S, DEFAULT_R),
    (OBSERVED_TAXONOMIES["aol-google-v1"], DEFAULT_S, DEFAULT_R),
]

# Rebalancing the v2 taxonomy against the v1 capacity, one row per top-set size.
REBALANCE_S_VALUES: List[int] = [5, 6, 7, 8, 9]

GRID_NAMES = ("table5", "table6", "aol")


def resolve_taxonomy_alias(name: str) -> Optional[str]:
    name_lower = name.lower()
    if name_lower in TAXONOMIES or name_lower in OBSERVED_TAXONOMIES:
        return name_lower
    return TAXONOMY_ALIASES.get(name_lower)


def taxonomy_size(name_or_size: str) -> Optional[int]:
    """Accepts either a taxonomy name/alias or a plain integer size."""
    if name_or_size.isdigit():
        return int(name_or_size)
    resolved = resolve_taxonomy_alias(name_or_size)
    if not resolved:
        return None
    return TAXONOMIES.get(resolved) or OBSERVED_TAXONOMIES.get(resolved)
