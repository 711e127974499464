"""Spatio-temporal object grounding from candidate masks and 4D layout cues."""

from .errors import ObjGroundError, ValidationError
from .geometry import Box, Mask, giou, iou

__version__ = "0.1.0"

__all__ = ["Box", "Mask", "ObjGroundError", "ValidationError", "giou", "iou"]
