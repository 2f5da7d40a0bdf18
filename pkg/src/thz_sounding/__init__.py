"""THz Sounding - Double-directional channel-sounding analysis and channel-parameter generation."""

__version__ = "0.2.0"
