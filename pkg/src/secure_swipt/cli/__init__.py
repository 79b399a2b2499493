"""Command-line entry point and unit conversions at the user boundary."""
from .units import db_to_linear, dbm_to_watts, linear_to_db, mean_dbm, watts_to_dbm

__all__ = ["db_to_linear", "dbm_to_watts", "linear_to_db", "mean_dbm", "watts_to_dbm"]
