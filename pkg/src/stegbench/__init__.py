"""Steganography workbench: parametric S-UNIWARD costs, a small NN engine,
pluggable steganalyzers, and an experiment harness for per-cover parameter
selection in continuous and discrete modes."""

__version__ = "0.1.0"
