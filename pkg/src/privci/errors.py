"""Exception types raised across the package."""

from __future__ import annotations


class PrivCIError(Exception):
    """Base class for all package errors."""


class DatasetError(PrivCIError, ValueError):
    pass


class MissingColumn(DatasetError):
    def __init__(self, column: str):
        super().__init__(f"missing column {column!r}")
        self.column = column


class ParseFailure(DatasetError):
    def __init__(self, row: int, col: int, text: str = ""):
        super().__init__(f"cannot parse value {text!r} at row {row}, column {col}")
        self.row = row
        self.col = col
        self.text = text


class NonFiniteValue(DatasetError):
    def __init__(self, row: int, col: int):
        super().__init__(f"non-finite value at row {row}, column {col}")
        self.row = row
        self.col = col


class TooFewRows(DatasetError):
    def __init__(self, n: int):
        super().__init__(f"need at least 2 rows, got {n}")
        self.n = n


class BoundViolation(PrivCIError, ValueError):
    def __init__(self, index: int, value: float | None = None, bound: float | None = None):
        msg = f"sample {index} exceeds its declared bound"
        if value is not None and bound is not None:
            msg += f" (|{value}| > {bound})"
        super().__init__(msg)
        self.index = index


class DimensionMismatch(PrivCIError, ValueError):
    pass


class SolveFailure(PrivCIError, ArithmeticError):
    pass


class NonPositiveLambda(PrivCIError, ValueError):
    pass


class EmptyGrid(PrivCIError, ValueError):
    pass


class LambdaBelowFloor(PrivCIError, ValueError):
    def __init__(self, lam: float, floor: float):
        super().__init__(f"lambda {lam} is below the floor {floor}")
        self.lam = lam
        self.floor = floor


class EmptyScores(PrivCIError, ValueError):
    pass


class IndexOutOfRange(PrivCIError, IndexError):
    pass


class DegenerateVariance(PrivCIError, ArithmeticError):
    pass


class EmptyInput(PrivCIError, ValueError):
    pass


class OffLatticeValue(PrivCIError, ValueError):
    def __init__(self, value: float, m: int):
        super().__init__(f"p-value {value} is not on the lattice {{1/{m + 1}, ..., 1}}")
        self.value = value
        self.m = m


class InvalidConfig(PrivCIError, ValueError):
    pass
