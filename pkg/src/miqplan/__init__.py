"""Region-linearized MIQP behavior planner."""

__version__ = "0.1.0"
