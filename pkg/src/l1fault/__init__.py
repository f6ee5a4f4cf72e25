"""l1-norm state and fault estimation for multi-agent networks with relative measurements."""

__version__ = "0.1.0"
