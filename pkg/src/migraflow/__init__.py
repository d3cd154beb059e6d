"""Population migration monitoring from WiFi access-point relocations."""

__version__ = "0.1.0"
