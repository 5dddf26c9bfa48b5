"""Verification metrics, maps, correlation analysis and station scoring."""

from .metrics import (MetricError, MetricReport, PearsonResult, diff_metrics, diff_valid,
                      first_order_diff, improvement, improvement_map, lead_report, mae_rmse,
                      pearson_map, spatial_error_map)
from .stations import (SAMPLERS, STATION_HEADER, StationError, StationRecord, StationReport,
                       StationScore, read_stations, sample_stack, station_verify, write_stations,
                       write_station_report)

__all__ = [
    "MetricError", "MetricReport", "PearsonResult", "diff_metrics", "diff_valid",
    "first_order_diff", "improvement", "improvement_map", "lead_report", "mae_rmse",
    "pearson_map", "spatial_error_map", "SAMPLERS", "STATION_HEADER", "StationError",
    "StationRecord", "StationReport", "StationScore", "read_stations", "sample_stack",
    "station_verify", "write_stations", "write_station_report",
]
