"""Deterministic simulation of a sensor-equipped wheelchair with IoT telemetry.

The pieces mirror the physical system they model: simulated sensors feed a
firmware control loop that steers a modeled wheelchair, stops for obstacles,
and relays timestamped vitals over an AT-command modem link to a
ThingSpeak-compatible telemetry service.
"""

__version__ = "0.1.0"
