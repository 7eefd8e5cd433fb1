"""Exception hierarchy shared across the toolkit.

Every error raised by the library derives from TrfsimError so callers (and the
CLI) can distinguish toolkit failures from programming errors.
"""


class TrfsimError(Exception):
    """Base class for all toolkit errors."""


# --- graph ---

class SelfEdge(TrfsimError):
    """A user may not follow herself."""


class DuplicateEdge(TrfsimError):
    """The (follower, followee) edge already exists."""


class UnknownUser(TrfsimError):
    """Query for a user that was never registered."""


# --- event log ---

class MalformedRecord(TrfsimError):
    """An event/snapshot line that cannot be parsed or violates an invariant."""


class UnsortedInput(TrfsimError):
    """An event sequence that violates the log ordering."""


# --- simulator ---

class InvalidConfig(TrfsimError):
    """A simulation or synthesis parameter out of its legal range."""


# --- detector ---

class InconsistentLog(TrfsimError):
    """A follow event for an edge that already exists."""


class EmptyInput(TrfsimError):
    """An estimator was handed nothing to estimate from."""


class NoQualifyingTweets(EmptyInput):
    """No tweet in the log satisfies the exogenous-estimator window condition."""


class NoQualifyingRetweets(EmptyInput):
    """No retweet in the log has a nonempty candidate listener set."""


# --- inference ---

class Underdetermined(TrfsimError):
    """Model parameters not identifiable from the given strata."""


class AllZeroSuccesses(TrfsimError):
    """Every stratum has zero follows; the observation probability pins at 0."""


class Separable(TrfsimError):
    """Logistic regression diverged (perfectly separable data)."""


class RankDeficient(TrfsimError):
    """Design matrix does not have full column rank."""


class NotConverged(TrfsimError):
    """Model did not converge; downstream statistics would be meaningless."""


# --- sampling ---

class Unreachable(TrfsimError):
    """A sampler could not collect the requested number of nodes."""


class DataError(TrfsimError):
    """File-level problem surfaced by the CLI (bad path, bad format, ...)."""
