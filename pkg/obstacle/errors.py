"""
obstacle/errors.py — Exceptions du laboratoire

Toutes les erreurs de précondition dérivent aussi de ValueError.
"""


class LabError(Exception):
    pass


class GridError(LabError, ValueError):
    pass


class SpecialFunctionError(LabError, ValueError):
    pass


class ProfileError(LabError, ValueError):
    pass


class SolverError(LabError, ValueError):
    pass


class FrequencyError(LabError, ValueError):
    pass


class GeometryError(LabError, ValueError):
    pass


class ConfigError(LabError, ValueError):
    pass


class ReportError(LabError, OSError):
    """Répertoire de sortie non inscriptible."""
