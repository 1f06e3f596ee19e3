"""Numerical verification of bundle-valued multisymplectic geometry: jets of
expressions, E-valued forms, Lie algebroids, homotopy momentum sections and
reduction, with a catalog of example models and a command-line runner."""

from .catalog import Model, builtin, load, save
from .expr import SmoothFunction
from .jets import Jet2
from .report import Check, Report
from .suites import run_suite

__all__ = ["Check", "Jet2", "Model", "Report", "SmoothFunction", "builtin", "load", "run_suite", "save"]
__version__ = "0.1.0"
