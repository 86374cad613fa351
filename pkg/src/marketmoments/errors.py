"""Exception hierarchy.

Two families: :class:`InputError` for malformed data or invalid
parameters, and :class:`NumericError` for failures that only show up once
numbers are crunched.  The command line maps them to exit codes 2 and 3.
"""


class MarketMomentsError(Exception):
    pass


class InputError(MarketMomentsError, ValueError):
    pass


class CSVFormatError(InputError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NumericError(MarketMomentsError, ArithmeticError):
    pass


class MomentOverflowError(NumericError):
    def __init__(self, m, detail=""):
        self.m = m
        msg = f"moment overflow at order m={m}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateError(NumericError):
    pass


class ShiftOutOfRangeError(NumericError):
    pass


class ConsistencyError(NumericError):
    pass


class InsufficientDecayError(NumericError):
    pass


class InsufficientCoverageError(NumericError):
    pass


class NegativeDensityError(NumericError):
    pass


class CFLError(NumericError):
    def __init__(self, dt, max_dt, courant, cfl_max):
        self.dt = dt
        self.max_dt = max_dt
        super().__init__(
            f"CFL violation: dt={dt:.6g} gives Courant number {courant:.4g} > "
            f"{cfl_max:g}; max admissible dt is {max_dt:.6g}"
        )
