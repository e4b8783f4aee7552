"""Desk-scale simulator of a hydrodynamic-focusing impedance cytometer.

Submodules
----------
geometry   parametric channel description and staircase rasterization
flow       steady creeping-flow solver on a staggered grid
tracer     cell populations and trajectory integration
metrics    focusing quality measured at the electrode plane
sweep      one-parameter design sweeps, trend checks, design selection
impedance  electrode impedance spectra and cell classification
config     run-configuration parsing and validation
cli        command-line entry point and file outputs
"""

__version__ = "0.1.0"
