"""Exception types shared across the package.

Plain contract violations (bad dimensions, invalid arguments) raise
ValueError; the classes here cover file-format and configuration failures
that callers may want to tell apart. Each carries a short ``category``
slug that the CLI prints in its machine-parsable error line.
"""

from __future__ import annotations


class ArtifactError(Exception):
    """Base class for persistent-artifact failures."""

    category = "format"


class FormatError(ArtifactError):
    """Bad magic, wrong artifact kind, or malformed manifest."""

    category = "format"


class UnsupportedVersionError(ArtifactError):
    """Manifest declares a major version this code does not read."""

    category = "version"


class ChecksumMismatchError(ArtifactError):
    """A blob's digest does not match the manifest checksum."""

    category = "checksum"


class DimensionMismatchError(ArtifactError):
    """Stored array shapes disagree with the manifest or with each other."""

    category = "dimension"


class ConfigError(Exception):
    """Invalid run or generator configuration."""

    category = "config"


class EmptyInputError(ValueError):
    """An operation received no frames or no streams."""

    category = "empty-input"
