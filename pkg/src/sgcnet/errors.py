"""Exception hierarchy.

Every error carries a ``context`` dict so callers higher in the pipeline can
attach where it happened (class name, depth, query index, file line) without
wrapping it in a new type.
"""
from __future__ import annotations


class SgcError(Exception):
    """Base class for all package errors."""

    def __init__(self, message: str = "", **context):
        super().__init__(message)
        self.message = message
        self.context = dict(context)

    def with_context(self, **context) -> "SgcError":
        self.context.update(context)
        return self

    def __str__(self) -> str:
        if not self.context:
            return self.message
        extra = ", ".join(f"{k}={v!r}" for k, v in self.context.items())
        return f"{self.message} [{extra}]"


class DataError(SgcError):
    """Bad numerical input or malformed file content."""


class ZeroVector(DataError):
    pass


class DimMismatch(DataError):
    pass


class NonFinite(DataError):
    pass


class InvalidSigma(DataError):
    pass


class PartitionOutOfRange(DataError):
    pass


class BadK(DataError):
    pass


class EmptyInput(DataError):
    pass


class EmptyHierarchy(DataError):
    pass


class InvalidBox(DataError):
    pass


class UnknownCategory(DataError):
    pass


class NonFiniteCost(DataError):
    pass


class BadGamma(DataError):
    pass


class SchemaError(DataError):
    pass


class EncoderError(SgcError):
    pass


class UnknownDescription(EncoderError):
    pass


class PromptError(SgcError):
    pass


class MissingSlot(PromptError):
    pass


class ProviderError(SgcError):
    """Anything that goes wrong talking to an LLM backend."""


class FixtureMiss(ProviderError):
    pass


class HttpTimeout(ProviderError):
    pass


class HttpBadStatus(ProviderError):
    pass


class MalformedResponse(ProviderError):
    pass
