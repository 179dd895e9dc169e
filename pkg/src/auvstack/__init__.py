"""auvstack: a deterministic AUV navigation stack and mission simulator."""

__version__ = "0.1.0"
