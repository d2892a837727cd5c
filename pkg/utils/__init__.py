"""
Utils package for s2d.

Lightweight exports only; data generation lives in `utils.datagen`.
"""
from .tensor_io import read_tensor_file, write_tensor_file

__all__ = ['read_tensor_file', 'write_tensor_file']
