"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CrashResolverError(Exception):
    """Base class for all package errors."""


# --- workspace ---------------------------------------------------------------


class NotARepository(CrashResolverError):
    """The given path is not a version-controlled repository."""


class UnknownCommit(CrashResolverError):
    """The requested commit does not exist in the repository."""


class FileNotTracked(CrashResolverError):
    """The requested path is not tracked at the snapshot commit."""


class IoFailure(CrashResolverError):
    """A filesystem operation failed (copy, write, disk full)."""


# --- crash report ------------------------------------------------------------


class EmptyReport(CrashResolverError):
    """The crash report text is blank."""


# --- search ------------------------------------------------------------------


class InvalidPattern(CrashResolverError):
    """The regular expression was rejected by the search backend."""


# --- context memory ----------------------------------------------------------


class EmptyNote(CrashResolverError):
    """A scratchpad note must be nonempty."""


class BudgetImpossible(CrashResolverError):
    """The irreducible prompt core alone exceeds the token budget."""


# --- synthesis ---------------------------------------------------------------


class MarkupError(CrashResolverError):
    """The patch markup could not be parsed.

    The message is written to be shown back to the model in a retry prompt.
    """


class NoWellFormedPatch(CrashResolverError):
    """All patch generation attempts produced unparseable markup."""


class ApplyFailure(CrashResolverError):
    """A symbol rewrite's locator could not be resolved against the index."""


# --- validation --------------------------------------------------------------


class HookMisconfigured(CrashResolverError):
    """A hook command template could not be instantiated."""


# --- model gateway -----------------------------------------------------------


class GatewayError(CrashResolverError):
    """Base class for model backend failures (fatal to one trajectory)."""


class BackendUnavailable(GatewayError):
    """The live backend kept failing after retries."""


class ScriptExhausted(GatewayError):
    """The scripted mock ran out of canned responses."""


class ScriptMismatch(GatewayError):
    """A scripted step's prompt predicate did not match the actual prompt."""


# --- evaluation --------------------------------------------------------------


class EmptyBenchmark(CrashResolverError):
    """No bug results to aggregate."""


class NoGroundTruth(CrashResolverError):
    """Recall metrics need a nonempty ground-truth file set."""


class NoSymbols(CrashResolverError):
    """Symbol overlap needs a nonempty commit-message symbol set."""


class NoCommits(CrashResolverError):
    """Commit overlap needs a nonempty referenced-commit set."""


class MissingResults(CrashResolverError):
    """The results directory holds nothing to evaluate."""


class ConfigError(CrashResolverError):
    """A codebase config or instance spec failed validation."""
