"""Discrete-event simulator of an execute-order-validate permissioned
blockchain running over a community wireless mesh network."""

__version__ = "0.1.0"
