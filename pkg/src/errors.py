class WiretapError(Exception):
    pass


# exit code 1 at the command line
class ConfigError(WiretapError):
    pass


class ParameterError(WiretapError):
    pass


class DimensionError(WiretapError):
    pass


# exit code 2 at the command line
class NumericalValidityError(WiretapError):
    pass


class DegenerateChannelError(NumericalValidityError):
    pass


class IllConditionedGapError(NumericalValidityError):
    pass


class OrientationError(NumericalValidityError):
    pass


class ValidityRangeError(NumericalValidityError):
    pass


class NumericError(NumericalValidityError):
    pass


class CheckFailedError(NumericalValidityError):
    pass
