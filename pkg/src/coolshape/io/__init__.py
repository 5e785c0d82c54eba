"""Configuration, file output and the command-line driver."""

from .config import ConfigError, RunConfig, load, loads, parse_config
from .vtk import read_vtk, write_state, write_vtk

__all__ = ["ConfigError", "RunConfig", "load", "loads", "parse_config", "read_vtk", "write_state", "write_vtk"]
