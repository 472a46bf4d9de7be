"""Exact density-based clustering (DBSCAN*, DBSCAN, HDBSCAN*) on a cube lattice."""

from .dbscan import assign_borders, dbscan_oracle, dbscan_star_oracle, s_dbscan, s_dbscan_star
from .errors import (
    CubeClustError,
    InfiniteScoreError,
    InsufficientPointsError,
    InvalidDimensionError,
    InvalidPointError,
    OracleCapError,
    ParameterError,
    ParseError,
)
from .labels import NOISE, Labeling

__all__ = [
    "NOISE",
    "Labeling",
    "assign_borders",
    "dbscan_oracle",
    "dbscan_star_oracle",
    "s_dbscan",
    "s_dbscan_star",
    "CubeClustError",
    "InfiniteScoreError",
    "InsufficientPointsError",
    "InvalidDimensionError",
    "InvalidPointError",
    "OracleCapError",
    "ParameterError",
    "ParseError",
]
