"""Exception hierarchy.  ``exit_code`` maps onto the CLI's exit status."""


class MqlabError(Exception):
    exit_code = 1


class ValidationError(MqlabError):
    exit_code = 1


class DimensionError(ValidationError):
    pass


class ContractError(ValidationError):
    """Operation called with an argument outside its contract."""


class SpecError(ValidationError):
    pass


class UnsupportedConfigurationError(ValidationError):
    pass


class ExpressionSyntaxError(ValidationError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExpressionEvalError(MqlabError):
    pass


class UndefinedPosteriorError(MqlabError):
    pass


class NotInSupportError(MqlabError):
    pass


class VerificationError(MqlabError):
    exit_code = 2


class EnumerationLimitError(MqlabError):
    exit_code = 3


class ParameterError(ValidationError):
    pass
