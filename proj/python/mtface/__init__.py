"""Python bindings for the mtface library."""

from ._core import (
    Error,
    Model,
    angles_to_vector,
    angular_error_deg,
    combined_loss,
    inspect,
    orientation_bin,
    synth,
)

__all__ = [
    "Error",
    "Model",
    "angles_to_vector",
    "angular_error_deg",
    "combined_loss",
    "inspect",
    "orientation_bin",
    "synth",
]
