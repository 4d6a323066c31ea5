"""BER and outage analysis of coded OFDM over quasi-static fading channels."""

__version__ = "0.1.0"
