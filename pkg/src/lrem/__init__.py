"""Design of locally resonant elastic metamaterial plate unit cells.

Band structures come from Bloch-periodic Mindlin plate finite elements;
invertible and feed-forward networks map designs to bandgaps and back;
mass is minimized under a bandgap-coverage constraint and the result is
checked on a finite plate.
"""
from .bands import Bandgap, BandStructure, DispersionSettings, compute_dispersion, extract_bandgaps
from .geometry import DESIGN_BOUNDS, UnitCellDesign, mass, mesh_cell

__version__ = "0.1.0"

__all__ = [
    "Bandgap", "BandStructure", "DESIGN_BOUNDS", "DispersionSettings", "UnitCellDesign",
    "compute_dispersion", "extract_bandgaps", "mass", "mesh_cell",
]
