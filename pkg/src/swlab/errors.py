"""Exception hierarchy.

Every error carries a short ``code`` string; the command-line front end
maps the two families (data vs. numerical) onto exit codes.
"""


class SWLabError(Exception):
    code = "E_SWLAB"


class DataError(SWLabError):
    code = "E_DATA"


class NumericalError(SWLabError):
    code = "E_NUMERICAL"


# lre solver
class SingularPencilError(NumericalError):
    code = "E_SINGULAR_PENCIL"


class DecompositionError(NumericalError):
    code = "E_DECOMP_FAIL"


# state space
class NonstationaryError(NumericalError):
    code = "E_NONSTATIONARY"


class FilterDivergedError(NumericalError):
    code = "E_FILTER_DIVERGED"


class RiccatiDivergedError(NumericalError):
    code = "E_RICCATI_DIVERGED"


# estimation
class AllStartsFailedError(NumericalError):
    code = "E_ALL_STARTS_FAILED"


# ingestion
class ParseError(DataError):
    code = "E_PARSE"


class MissingInWindowError(DataError):
    code = "E_MISSING_IN_WINDOW"


class NonpositiveError(DataError):
    code = "E_NONPOSITIVE"


class WindowShortError(DataError):
    code = "E_WINDOW_SHORT"


# metrics
class ZeroSSEError(NumericalError):
    code = "E_ZERO_SSE"


class ZeroVarianceError(NumericalError):
    code = "E_ZERO_VARIANCE"


class DegenerateError(NumericalError):
    code = "E_DEGENERATE"
