"""
Designs package: construct, draw and evaluate subsampling designs
"""

from .case_control import case_control
from .individualized import osmac, ossat
from .stratified import (
    adaptive_two_wave, build_strata, exact_strata, neyman_allocation, within_stratum_sd
)
from .sampling import draw_poisson, draw_second_wave, draw_stratified, draw_with_replacement
from .variance import (
    brute_force_design_variance, neyman_variance, poisson_variance, stratified_variance,
    trace_gap_uninformative, with_replacement_variance,
)

__all__ = [
    'case_control',
    'osmac',
    'ossat',
    'build_strata',
    'exact_strata',
    'neyman_allocation',
    'within_stratum_sd',
    'adaptive_two_wave',
    'draw_poisson',
    'draw_with_replacement',
    'draw_stratified',
    'draw_second_wave',
    'poisson_variance',
    'with_replacement_variance',
    'stratified_variance',
    'neyman_variance',
    'brute_force_design_variance',
    'trace_gap_uninformative',
]
