"""
HECG Error Module

The ten-type error table, the scalar error signal, the failure classifier and
the correction-level router.
"""

from src.modules.error_mod.taxonomy import (
    ErrorType,
    Severity,
    Recoverability,
    ErrorFamily,
    CorrectionLevel,
    ErrorClass,
    ERROR_TABLE,
    FAMILY_OF,
    error_class,
    taxonomy_table,
    export_taxonomy
)
from src.modules.error_mod.engine import compute_error, classify, level_for, diagnose_message

__all__ = [
    "ErrorType",
    "Severity",
    "Recoverability",
    "ErrorFamily",
    "CorrectionLevel",
    "ErrorClass",
    "ERROR_TABLE",
    "FAMILY_OF",
    "error_class",
    "taxonomy_table",
    "export_taxonomy",
    "compute_error",
    "classify",
    "level_for",
    "diagnose_message"
]
