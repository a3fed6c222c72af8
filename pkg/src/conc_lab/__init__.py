"""conc-lab - Numerical laboratory for transportation-cost inequalities and concentration of measure."""

__version__ = "0.1.0"
