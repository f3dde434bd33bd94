"""Single source of truth for the package version string."""

VERSION = "0.1.0"
