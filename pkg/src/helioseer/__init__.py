"""Gridded day-ahead solar irradiance forecasting from satellite imagery."""

__version__ = "0.1.0"
