"""Attention-based quantum state tomography from Pauli-4 measurement data."""

__version__ = "0.1.0"

from .errors import AqtError, CapacityError, DomainError, NumericError, ShapeError, ValidationError
