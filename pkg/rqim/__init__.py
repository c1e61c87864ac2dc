"""Reversible QIM watermarking toolkit for neural network weights"""

from .errors import RqimError
from .rqim_core import QimParams, rqim_embed, rqim_extract, rqim_recover
from .hs_baseline import HsParams, preprocess, deprocess, hs_embed, hs_extract, hs_recover
from .keying import SecretKey, WatermarkInfo, construct_locations
from .schemes import Precision, WeightTensor, WatermarkMessage, mark, extract, restore, diff

__all__ = [
    'RqimError',
    'QimParams',
    'rqim_embed',
    'rqim_extract',
    'rqim_recover',
    'HsParams',
    'preprocess',
    'deprocess',
    'hs_embed',
    'hs_extract',
    'hs_recover',
    'SecretKey',
    'WatermarkInfo',
    'construct_locations',
    'Precision',
    'WeightTensor',
    'WatermarkMessage',
    'mark',
    'extract',
    'restore',
    'diff',
]

__version__ = '1.0.0'
