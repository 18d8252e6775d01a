"""Small bundled datasets."""

import numpy as np

from .statistics import ContingencyTable

ROAD_TYPES = (0, 1, 2, 3, 6)
WEATHER_CODES = (0, 1, 2, 3, 4, 5, 6, 7)

# Czech police road-accident reports, 2018: type of road (rows) by weather
# conditions at the time of the accident (columns).
_ACCIDENT_COUNTS = np.array(
    [
        [18, 3273, 37, 192, 342, 142, 45, 4],
        [51, 12485, 175, 691, 699, 313, 163, 41],
        [33, 13345, 193, 667, 590, 467, 236, 40],
        [32, 11554, 139, 489, 397, 355, 262, 15],
        [55, 35675, 97, 929, 966, 592, 267, 13],
    ]
)


def road_accidents() -> ContingencyTable:
    """Road type x weather contingency table (86 079 accidents)."""
    return ContingencyTable(_ACCIDENT_COUNTS.copy(), ROAD_TYPES, WEATHER_CODES)
