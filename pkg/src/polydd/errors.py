"""Exception types shared across the package."""


class PolyDDError(Exception):
    """Base class for all package errors."""


class ParameterError(PolyDDError, ValueError):
    """Invalid numeric parameter passed to a constructor or generator."""


class StructuralError(PolyDDError):
    """Inconsistent mesh, dof map or operator sizes."""


class NumericalError(PolyDDError, ArithmeticError):
    """Factorization breakdown or loss of definiteness."""


class StateError(PolyDDError, RuntimeError):
    """Operator used before the data it depends on was built."""
