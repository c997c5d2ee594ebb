"""Link-level simulator for the cell-free massive MIMO downlink.

The package covers the conventional coherent downlink (MMSE channel
estimation, MR / LP-MMSE / P-MMSE precoding, spectral-efficiency bounds
under random per-AP oscillator phases) and a differential space-time
block coding scheme whose detector needs neither channel knowledge nor
phase synchronization across the access points.
"""

__version__ = "0.1.0"
