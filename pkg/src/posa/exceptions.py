"""Exception types shared across the package."""


class SamplingDesignError(Exception):
    """Base class for errors raised by this package."""


class InfeasiblePopulationError(SamplingDesignError):
    """A population spec cannot be realized (capacity, divisibility, target)."""


class ZeroPrevalenceError(SamplingDesignError):
    """Between-area variation ratio is undefined because overall prevalence is zero."""


class ProbabilityRangeError(SamplingDesignError):
    """A selection probability left [0, 1] during a sequential run.

    Carries the step index (0-based visit position), the offending value,
    and a short hint on how to make the design feasible.
    """

    def __init__(self, step: int, value: float, hint: str = ""):
        self.step = step
        self.value = value
        self.hint = hint
        msg = f"selection probability {value!r} out of [0, 1] at step {step}"
        if hint:
            msg += f" ({hint})"
        super().__init__(msg)


class InvalidWeightError(SamplingDesignError):
    """An estimator received a sampled unit with a nonpositive draw probability."""


class EnumerationLimitError(SamplingDesignError):
    """Exhaustive enumeration was requested for a population above the size cap."""


class ScenarioError(SamplingDesignError):
    """A simulation scenario failed (bad config or too many failed replicates)."""
