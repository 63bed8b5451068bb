"""Second-order cone relaxations of AC optimal power flow."""

__version__ = "0.1.0"
