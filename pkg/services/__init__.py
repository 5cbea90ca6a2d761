from .algebra_service import algebra_service
from .toda_service import toda_service
from .solution_service import solution_service
from .goursat_service import goursat_service
from .csv_service import csv_service
from .transport_service import transport_service
from .geometry_service import geometry_service
from .runner_service import runner_service

__all__ = [
    "algebra_service",
    "toda_service",
    "solution_service",
    "goursat_service",
    "csv_service",
    "transport_service",
    "geometry_service",
    "runner_service",
]
