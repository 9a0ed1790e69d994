"""gaitlab: gait capture preprocessing, lower-body inverse dynamics,
motor-unit stimulation reconstruction, and ensemble disorder detection."""

__version__ = "0.1.0"
