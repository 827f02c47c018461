"""Ghost operators on box spaces: construction, certification and measurement."""

__version__ = "0.1.0"
