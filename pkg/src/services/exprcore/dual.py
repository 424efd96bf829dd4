"""Forward-mode dual (order 1) and hyper-dual (order 2) numbers.

Values may be floats or numpy arrays of a batch shape ``B``; gradients have
shape ``(k, *B)`` and Hessians ``(k, k, *B)`` for ``k`` seeded variables.
Division and powers go through :meth:`apply`, so every Hessian update is a
sum of symmetric terms and stays exactly symmetric.
"""

from typing import Any, Callable, List, Optional, Sequence

import numpy as np

Scalar = Any
UnaryFn = Callable[[Scalar], Scalar]


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[:, None] * b[None, :]


class Dual:
    __slots__ = ("value", "grad")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, value: Scalar, grad: np.ndarray):
        self.value = value
        self.grad = grad

    @classmethod
    def variables(cls, point: Sequence[Scalar]) -> List["Dual"]:
        values = [np.asarray(v, dtype=float) for v in point]
        k = len(values)
        shape = np.broadcast(*values).shape if values else ()
        seeds = []
        for i, value in enumerate(values):
            grad = np.zeros((k, *shape))
            grad[i] = 1.0
            seeds.append(cls(value if shape else float(value), grad))
        return seeds

    def apply(self, f0: UnaryFn, f1: UnaryFn, f2: Optional[UnaryFn] = None) -> "Dual":
        return Dual(f0(self.value), f1(self.value) * self.grad)

    def __add__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.grad + other.grad)
        return Dual(self.value + other, self.grad)

    __radd__ = __add__

    def __neg__(self) -> "Dual":
        return Dual(-self.value, -self.grad)

    def __sub__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.grad - other.grad)
        return Dual(self.value - other, self.grad)

    def __rsub__(self, other: Any) -> "Dual":
        return Dual(other - self.value, -self.grad)

    def __mul__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.grad * other.value + other.grad * self.value,
            )
        return Dual(self.value * other, self.grad * other)

    __rmul__ = __mul__

    def reciprocal(self) -> "Dual":
        return self.apply(lambda v: 1.0 / v, lambda v: -1.0 / (v * v))

    def __truediv__(self, other: Any) -> "Dual":
        if isinstance(other, Dual):
            return self * other.reciprocal()
        return Dual(self.value / other, self.grad / other)

    def __rtruediv__(self, other: Any) -> "Dual":
        return self.reciprocal() * other

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.grad!r})"


class HyperDual:
    __slots__ = ("value", "grad", "hess")
    __array_ufunc__ = None

    def __init__(self, value: Scalar, grad: np.ndarray, hess: np.ndarray):
        self.value = value
        self.grad = grad
        self.hess = hess

    @classmethod
    def variables(cls, point: Sequence[Scalar]) -> List["HyperDual"]:
        values = [np.asarray(v, dtype=float) for v in point]
        k = len(values)
        shape = np.broadcast(*values).shape if values else ()
        seeds = []
        for i, value in enumerate(values):
            grad = np.zeros((k, *shape))
            grad[i] = 1.0
            seeds.append(
                cls(value if shape else float(value), grad, np.zeros((k, k, *shape)))
            )
        return seeds

    def apply(self, f0: UnaryFn, f1: UnaryFn, f2: Optional[UnaryFn] = None) -> "HyperDual":
        if f2 is None:
            raise ValueError("second derivative required for hyper-dual evaluation")
        d1 = f1(self.value)
        d2 = f2(self.value)
        return HyperDual(
            f0(self.value),
            d1 * self.grad,
            d1 * self.hess + d2 * _outer(self.grad, self.grad),
        )

    def __add__(self, other: Any) -> "HyperDual":
        if isinstance(other, HyperDual):
            return HyperDual(
                self.value + other.value, self.grad + other.grad, self.hess + other.hess
            )
        return HyperDual(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self) -> "HyperDual":
        return HyperDual(-self.value, -self.grad, -self.hess)

    def __sub__(self, other: Any) -> "HyperDual":
        return self + (-other)

    def __rsub__(self, other: Any) -> "HyperDual":
        return (-self) + other

    def __mul__(self, other: Any) -> "HyperDual":
        if isinstance(other, HyperDual):
            cross = _outer(self.grad, other.grad)
            return HyperDual(
                self.value * other.value,
                self.grad * other.value + other.grad * self.value,
                self.hess * other.value
                + other.hess * self.value
                + (cross + np.swapaxes(cross, 0, 1)),
            )
        return HyperDual(self.value * other, self.grad * other, self.hess * other)

    __rmul__ = __mul__

    def reciprocal(self) -> "HyperDual":
        return self.apply(
            lambda v: 1.0 / v, lambda v: -1.0 / (v * v), lambda v: 2.0 / (v * v * v)
        )

    def __truediv__(self, other: Any) -> "HyperDual":
        if isinstance(other, HyperDual):
            return self * other.reciprocal()
        return HyperDual(self.value / other, self.grad / other, self.hess / other)

    def __rtruediv__(self, other: Any) -> "HyperDual":
        return self.reciprocal() * other

    def __repr__(self) -> str:
        return f"HyperDual({self.value!r}, {self.grad!r}, {self.hess!r})"


def real_part(x: Any) -> Any:
    """Plain value of a number, array, dual or hyper-dual."""
    if isinstance(x, (Dual, HyperDual)):
        return x.value
    return x
