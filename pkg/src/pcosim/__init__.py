"""Simulation and analysis toolkit for pulse-coupled oscillator protocols
on locally connected networks: excitatory synchronization with delays and
refractory gating, inhibitory proportional-fair scheduling, spectral and
fixed-point analysis, and a seeded Monte Carlo harness."""

from . import harness, sched, spectral, sync, topology  # noqa: F401

__all__ = ["topology", "sync", "sched", "spectral", "harness"]
__version__ = "0.1.0"
