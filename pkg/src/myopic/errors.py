class UsageError(ValueError):
    """An operation was called outside its contract (bad arguments, bad input file)."""


class ScenarioError(ValueError):
    """A configuration does not have the shape a construction requires."""
