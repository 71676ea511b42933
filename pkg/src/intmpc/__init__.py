"""Learned velocity-reference guidance for contouring MPC in dense traffic."""

__version__ = "0.1.0"
