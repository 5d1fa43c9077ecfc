"""Spectra of sparse and heavy-tailed random matrices through local weak
limits: marked graphs, neighborhood laws, UGW and PWIT limits, traffics and
the entropies of neighborhood distributions."""

__version__ = "0.1.0"
