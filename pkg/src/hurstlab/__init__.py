"""Generate fBm and scaling Markov ensembles; measure what H can and cannot tell apart."""

__version__ = "0.1.0"
