"""Time-domain simulation of low-inertia power systems with grid-forming converters."""

__version__ = "0.1.0"
