"""Exception hierarchy shared by every relcast module.

The CLI maps these onto exit codes, so each family stays distinct:
usage/validation problems, numeric failures and integrity failures.
"""

from __future__ import annotations


class RelcastError(Exception):
    """Base class for all relcast errors."""


class DomainError(RelcastError, ValueError):
    """An input lies outside the validity domain of a model."""


class ConfigurationError(RelcastError, ValueError):
    """A table, grid, parameter space or run setting is malformed."""


class UnknownLocationError(RelcastError, KeyError):
    """A named location is absent from the location factor table."""

    def __init__(self, name: str, known: list[str]):
        self.name = name
        self.known = sorted(known)
        super().__init__(f"unknown location {name!r}; known locations: {', '.join(self.known)}")

    def __str__(self) -> str:
        return self.args[0]


class UsageError(RelcastError, TypeError):
    """An API was called with arguments of the wrong shape or kind."""


class EncodingError(RelcastError, ValueError):
    """A feature value cannot be encoded with the given schema."""


class NumericalError(RelcastError, ArithmeticError):
    """A linear system or fit could not be solved reliably."""


class CompositionError(RelcastError, ValueError):
    """Compact models cannot be composed (e.g. disjoint validity ranges)."""


class PackageError(RelcastError):
    """Base class for compact-model package loading failures."""


class SchemaError(PackageError, ValueError):
    """The package container is malformed or violates the key whitelist."""


class IntegrityError(PackageError):
    """The stored content digest does not match the package content."""


class VersionError(PackageError):
    """The package declares a format version this build cannot read."""
