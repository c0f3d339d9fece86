"""dqplots: figure rendering for dqtrack trial outputs."""

from .reader import SCHEMA, SchemaError, load_trial, signed_errors, three_sigma_bands
from .render import KINDS, PlotSpec, render

__version__ = "0.1.0"
