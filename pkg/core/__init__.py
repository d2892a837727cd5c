"""
Core package for s2d: autodiff engine, parameter store, configuration,
model composition, training, evaluation and checkpoints.
"""

__all__: list[str] = []
