"""Spin-3/2 AKLT quasi-chain: gap certification, PEPS ground state and MBQC."""

__version__ = "0.1.0"
