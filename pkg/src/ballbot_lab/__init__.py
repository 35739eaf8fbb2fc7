"""ballbot-lab: simulation and control laboratory for a ballbot drivetrain."""

__version__ = "0.1.0"
