"""HTTP service wrapper around the simulation core."""

from .app import create_app
from .models import (
    ChannelSettings,
    SweepRequest,
    SweepResponse,
    SweepRowModel,
    TrialFailureModel,
)

__all__ = [
    "ChannelSettings",
    "SweepRequest",
    "SweepResponse",
    "SweepRowModel",
    "TrialFailureModel",
    "create_app",
]
