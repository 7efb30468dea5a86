"""
Evaluation Module - Epsilon convergence studies.
"""

from .config import StudyConfig, load_config
from .study import (Study, StudyRecord, RateFit, Reference,
                    ReferenceComparison, fit_rate, compare_reference,
                    emit_outputs, run_study)

__all__ = [
    'StudyConfig',
    'load_config',
    'Study',
    'StudyRecord',
    'RateFit',
    'Reference',
    'ReferenceComparison',
    'fit_rate',
    'compare_reference',
    'emit_outputs',
    'run_study'
]
