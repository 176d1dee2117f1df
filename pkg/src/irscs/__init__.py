"""Compressed estimation of IRS-assisted mmWave cascade channels.

Modules
-------
arrays       steering vectors, DFT grids and the dictionaries ``F_L``, ``F_P``
channel      geometric Rician channel draws and the cascade ``diag(h_r^H) G``
cascade      merged sparse representation, sensing operator, MIMO extension
solvers      OMP, EM-BG-GAMP, oracle LS and conventional LS
beamforming  IRS phase optimization, MRT, NMSE and ARSPR
experiments  Monte Carlo harness and sweeps
verify       brute-force self-checks
"""
__version__ = "0.1.0"
