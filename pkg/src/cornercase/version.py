"""Single source for the toolkit version string."""

TOOLKIT_VERSION = "0.1.0"
