"""Computable Hilbert-space elements.

Two concrete representations are supported:

* ``RkhsElement``: a finite kernel expansion ``f = sum_i alpha_i k(., x_i)``
  in the reproducing kernel Hilbert space of a ``KernelSpec``.
* ``GridFunction``: values on the nodes of a ``QuadratureGrid``; the inner
  product is the weighted sum ``sum_i w_i f_i g_i`` over in-domain nodes,
  i.e. a quadrature discretization of an L2 space.

Both are immutable. Arithmetic goes through ``axpy``/``scale`` (and the
operator overloads built on them), so the optimization code never needs to
know which representation it is working with.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Union

import numpy as np

TOL_NUM = 1e-9
TOL_PSD = 1e-8


class SpaceMismatchError(ValueError):
    """Two elements do not live in the same Hilbert space."""


@dataclass(frozen=True)
class KernelSpec:
    """Reproducing kernel on R^n.

    gaussian:   exp(-|x - y|^2 / (2 bandwidth^2))
    polynomial: (x.y + offset)^degree
    linear:     x.y
    """

    kind: str = "gaussian"
    bandwidth: float = 1.0
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "polynomial", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not self.bandwidth > 0:
            raise ValueError("gaussian bandwidth must be positive")
        if self.kind == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("polynomial degree must be a positive integer")
            if self.offset < 0:
                # negative offsets break positive semidefiniteness
                raise ValueError("polynomial offset must be nonnegative")

    def gram(self, a, b) -> np.ndarray:
        """Kernel matrix ``K[i, j] = k(a_i, b_j)`` for point sets a (m, n), b (p, n)."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        if self.kind == "gaussian":
            d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
            return np.exp(-d2 / (2.0 * self.bandwidth**2))
        dot = a @ b.T
        if self.kind == "linear":
            return dot
        return (dot + self.offset) ** int(self.degree)

    def diag(self, a) -> np.ndarray:
        """``k(a_i, a_i)`` for each row of a."""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if self.kind == "gaussian":
            return np.ones(a.shape[0])
        sq = (a * a).sum(axis=1)
        if self.kind == "linear":
            return sq
        return (sq + self.offset) ** int(self.degree)

    def __call__(self, x, y) -> float:
        return float(self.gram(np.atleast_1d(x)[None, :], np.atleast_1d(y)[None, :])[0, 0])


@functools.lru_cache(maxsize=1024)
def _cached_gram(kernel, a_key, a_shape, b_key, b_shape):
    a = np.frombuffer(a_key, dtype=float).reshape(a_shape)
    b = np.frombuffer(b_key, dtype=float).reshape(b_shape)
    k = kernel.gram(a, b)
    k.setflags(write=False)
    return k


def gram(kernel: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Memoized Gram matrix between two center lists (read-only result)."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    return _cached_gram(kernel, a.tobytes(), a.shape, b.tobytes(), b.shape)


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


class _Arithmetic:
    """Operator sugar over axpy/scale; subclasses are immutable."""

    def __add__(self, other):
        return axpy(1.0, other, self)

    def __sub__(self, other):
        return axpy(-1.0, other, self)

    def __neg__(self):
        return scale(-1.0, self)

    def __mul__(self, alpha):
        if not np.isscalar(alpha):
            return NotImplemented
        return scale(float(alpha), self)

    __rmul__ = __mul__

    def __truediv__(self, alpha):
        return scale(1.0 / float(alpha), self)


@dataclass(frozen=True, eq=False)
class RkhsElement(_Arithmetic):
    kernel: KernelSpec
    centers: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float)
        if centers.ndim == 1:
            centers = centers.reshape(-1, 1) if centers.size else centers.reshape(0, 1)
        coefs = np.atleast_1d(np.array(self.coefficients, dtype=float))
        if centers.ndim != 2 or centers.shape[0] != coefs.shape[0]:
            raise ValueError(
                f"need one coefficient per center, got {centers.shape[0]} centers "
                f"and {coefs.shape[0]} coefficients"
            )
        centers.setflags(write=False)
        coefs.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "coefficients", coefs)

    @classmethod
    def zero(cls, kernel: KernelSpec, dim: int) -> RkhsElement:
        return cls(kernel, np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def section(cls, kernel: KernelSpec, x, coefficient: float = 1.0) -> RkhsElement:
        """``coefficient * k(., x)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(kernel, x[None, :], [coefficient])

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def __len__(self):
        return self.coefficients.shape[0]

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def __repr__(self):
        return f"RkhsElement({self.kernel.kind}, dim={self.dim}, terms={len(self)})"


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes with positive cell measures and a domain-membership mask.

    Masked-out nodes carry no measure: every integral (and so every inner
    product) only sees ``weights * mask``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    mask: np.ndarray = None
    measure: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        weights = np.array(self.weights, dtype=float).ravel()
        if weights.shape[0] != nodes.shape[0]:
            raise ValueError("one weight per node required")
        if not np.all(weights > 0):
            raise ValueError("quadrature weights must be positive")
        mask = (
            np.ones(nodes.shape[0], dtype=bool)
            if self.mask is None
            else np.array(self.mask, dtype=bool).ravel()
        )
        if mask.shape[0] != nodes.shape[0]:
            raise ValueError("one mask flag per node required")
        measure = np.where(mask, weights, 0.0)
        for arr in (nodes, weights, mask, measure):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "measure", measure)

    @classmethod
    def discrete(cls, probabilities) -> QuadratureGrid:
        """Finite probability space: node i is outcome i with mass mu_i."""
        p = np.asarray(probabilities, dtype=float).ravel()
        return cls(np.arange(p.size, dtype=float)[:, None], p)

    @classmethod
    def box(cls, lower, upper, resolution, indicator=None) -> QuadratureGrid:
        """Uniform Cartesian midpoint grid on a box.

        Nodes are cell centers, weights the cell volume; ``indicator`` (a
        vectorized predicate on an (N, d) array) sets the mask.
        """
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        res = np.broadcast_to(np.asarray(resolution, dtype=int), lower.shape)
        h = (upper - lower) / res
        axes = [lo + (np.arange(r) + 0.5) * step for lo, r, step in zip(lower, res, h)]
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        weights = np.full(nodes.shape[0], float(np.prod(h)))
        mask = None if indicator is None else np.asarray(indicator(nodes), dtype=bool)
        return cls(nodes, weights, mask)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def compatible(self, other: QuadratureGrid) -> bool:
        if self is other:
            return True
        return (
            self.nodes.shape == other.nodes.shape
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.measure, other.measure)
        )

    def function(self, values) -> GridFunction:
        return GridFunction(self, values)

    def constant(self, value: float) -> GridFunction:
        return GridFunction(self, np.full(self.size, float(value)))

    def indicator(self) -> GridFunction:
        """The domain characteristic function (1 on masked-in nodes)."""
        return GridFunction(self, self.mask.astype(float))

    def coordinate(self, axis: int) -> GridFunction:
        return GridFunction(self, self.nodes[:, axis])


@dataclass(frozen=True, eq=False)
class GridFunction(_Arithmetic):
    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.shape[0] != self.grid.size:
            raise ValueError(
                f"grid has {self.grid.size} nodes but {values.shape[0]} values given"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __repr__(self):
        return f"GridFunction(nodes={self.grid.size})"


HilbertElement = Union[RkhsElement, GridFunction]


def _check_space(a, b):
    if isinstance(a, RkhsElement) and isinstance(b, RkhsElement):
        if a.kernel != b.kernel or a.dim != b.dim:
            raise SpaceMismatchError("RKHS elements use different kernels or dimensions")
        return
    if isinstance(a, GridFunction) and isinstance(b, GridFunction):
        if not a.grid.compatible(b.grid):
            raise SpaceMismatchError("grid functions live on different quadrature grids")
        return
    raise SpaceMismatchError(f"cannot combine {type(a).__name__} and {type(b).__name__}")


def inner(a: HilbertElement, b: HilbertElement) -> float:
    _check_space(a, b)
    if isinstance(a, GridFunction):
        return float(np.dot(a.grid.measure * a.values, b.values))
    if len(a) == 0 or len(b) == 0:
        return 0.0
    k = gram(a.kernel, a.centers, b.centers)
    return float(a.coefficients @ k @ b.coefficients)


def norm(a: HilbertElement) -> float:
    # clamp tiny negative round-off from indefinite-looking Gram products
    return float(np.sqrt(max(inner(a, a), 0.0)))


def scale(alpha: float, x: HilbertElement) -> HilbertElement:
    if isinstance(x, GridFunction):
        return GridFunction(x.grid, alpha * x.values)
    return RkhsElement(x.kernel, x.centers, alpha * x.coefficients)


def axpy(alpha: float, x: HilbertElement, y: HilbertElement) -> HilbertElement:
    """``alpha * x + y``. RKHS expansions are concatenated, not merged."""
    _check_space(x, y)
    if isinstance(x, GridFunction):
        return GridFunction(y.grid, alpha * x.values + y.values)
    if alpha == 0.0 or len(x) == 0:
        return y
    if len(y) == 0:
        return scale(alpha, x)
    return RkhsElement(
        y.kernel,
        np.vstack([x.centers, y.centers]),
        np.concatenate([alpha * x.coefficients, y.coefficients]),
    )


def zeros_like(x: HilbertElement) -> HilbertElement:
    if isinstance(x, GridFunction):
        return GridFunction(x.grid, np.zeros(x.grid.size))
    return RkhsElement.zero(x.kernel, x.dim)


def compact(f: HilbertElement, prune_tol: float = 0.0) -> HilbertElement:
    """Merge coincident centers and drop coefficients with ``|alpha| < prune_tol``.

    Merging is exact. Pruning moves the element by at most
    ``prune_tol * sum(sqrt(k(x_i, x_i)))`` over the dropped centers.
    Grid functions are returned unchanged.
    """
    if prune_tol < 0:
        raise ValueError("prune_tol must be nonnegative")
    if isinstance(f, GridFunction) or len(f) == 0:
        return f
    centers, inverse = np.unique(f.centers, axis=0, return_inverse=True)
    coefs = np.bincount(inverse.ravel(), weights=f.coefficients, minlength=centers.shape[0])
    keep = (np.abs(coefs) >= prune_tol) & (coefs != 0.0)
    return RkhsElement(f.kernel, centers[keep], coefs[keep])


def evaluate(f: RkhsElement, x) -> float:
    """``f(x) = sum_i alpha_i k(x_i, x)``; equals ``inner(k(., x), f)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (f.dim,):
        raise ValueError(f"point has shape {x.shape}, expansion lives in R^{f.dim}")
    if len(f) == 0:
        return 0.0
    return float(f.kernel.gram(f.centers, x[None, :])[:, 0] @ f.coefficients)


def evaluate_many(f: RkhsElement, xs) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if len(f) == 0:
        return np.zeros(xs.shape[0])
    return f.kernel.gram(xs, f.centers) @ f.coefficients


def to_csv(element: HilbertElement, path) -> None:
    """One row per center/node: coordinates, then coefficient or value."""
    if isinstance(element, GridFunction):
        points, vals, label = element.grid.nodes, element.values, "value"
    else:
        points, vals, label = element.centers, element.coefficients, "coefficient"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(points.shape[1])] + [label])
        for p, v in zip(points, vals):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def rkhs_from_csv(path, kernel: KernelSpec) -> RkhsElement:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return RkhsElement(kernel, data[:, :-1], data[:, -1])
