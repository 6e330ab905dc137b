"""Probabilistic source separation, context classification, and trial design
for a simulated hearing aid, driven by expected-free-energy proposals."""

__version__ = "0.1.0"
