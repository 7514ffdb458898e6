"""Polymorphic receiver simulation: waveforms, RFNet classifier, budget and throughput."""

__version__ = "0.1.0"
