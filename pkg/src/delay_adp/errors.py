class DelayADPError(Exception):
    pass


class ConfigError(DelayADPError, ValueError):
    """Invalid experiment or plant configuration."""


class NumericalError(DelayADPError, RuntimeError):
    """A computation produced non-finite, divergent or unresolved output."""


class BlowUpError(NumericalError):
    """State magnitude exceeded the simulation guard."""


class ExcitationError(DelayADPError):
    """The regression data do not satisfy the excitation condition.

    Remedy: collect more data, i.e. extend the learning window or the
    exploration signal, and rebuild the regression.
    """

    def __init__(self, min_eig, alpha, num_rows, num_cols):
        self.min_eig = min_eig
        self.alpha = alpha
        self.num_rows = num_rows
        self.num_cols = num_cols
        super().__init__(
            f"excitation check failed: min eig {min_eig:.3e} < alpha {alpha:.1e} "
            f"with {num_rows} segments for {num_cols} unknowns; "
            "collect more data (extend the trajectory or the learning window)"
        )
