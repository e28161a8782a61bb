"""Covariance functions and their composition trees.

Three stationary leaves are provided, each parameterized by an output-scale
``variance`` and a ``lengthscale`` (plus a ``period`` for the periodic leaf
and a smoothness ``nu`` for the Matern leaf), evaluated on the Euclidean
distance restricted to the leaf's active feature dimensions:

    squared exponential   k(d) = v * exp(-d^2 / (2 t^2))
    periodic              k(d) = v * exp(-2 sin^2(pi d / p) / t^2)
    Matern (nu = 1/2)     k(d) = v * exp(-d / t)
    Matern (nu = 3/2)     k(d) = v * (1 + a) exp(-a),        a = sqrt(3) d / t
    Matern (nu = 5/2)     k(d) = v * (1 + a + a^2/3) exp(-a), a = sqrt(5) d / t

Only the closed-form Matern orders are supported; they coincide with the
general Bessel-function form for those orders.  Trees combine leaves with
``Sum`` and ``Product`` nodes.  Every expression is an immutable value: all
evaluation is pure, and hyperparameters are exposed as a flat log-space
vector (leaves in depth-first, left-to-right order; per leaf
``[variance, lengthscale, period?]``) so optimizers never inspect the tree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

MATERN_ORDERS = (0.5, 1.5, 2.5)


class KernelError(ValueError):
    """Invalid kernel parameterization or evaluation request."""


def _check_positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise KernelError(f"{name} must be a positive finite real, got {value!r}")


def _check_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0:
        raise KernelError("active dims must be non-empty")
    if any(d < 0 for d in dims) or len(set(dims)) != len(dims):
        raise KernelError(f"active dims must be distinct non-negative indices, got {dims}")
    return dims


def pairwise_distance(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between the rows of A and B."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


class Kernel:
    """Base of all kernel expressions."""

    def gram(self, X, X2=None) -> np.ndarray:
        """Covariance matrix between the rows of X and X2 (default X)."""
        raise NotImplementedError

    def diag(self, X) -> np.ndarray:
        """Diagonal of ``gram(X, X)`` without the quadratic cost."""
        raise NotImplementedError

    def value(self, x, x2) -> float:
        """Single covariance k(x, x2) for full feature vectors."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        if x.shape != x2.shape:
            raise KernelError("feature vectors must share dimensionality")
        return float(self.gram(x[None, :], x2[None, :])[0, 0])

    def gram_with_grads(self, X) -> tuple[np.ndarray, list[np.ndarray]]:
        """Gram matrix plus its derivatives w.r.t. each log parameter."""
        raise NotImplementedError

    # -- flat hyperparameter view --------------------------------------

    def leaves(self) -> list["Leaf"]:
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return sum(leaf._n_leaf_params() for leaf in self.leaves())

    def log_params(self) -> np.ndarray:
        return np.concatenate([leaf._leaf_log_params() for leaf in self.leaves()]) \
            if self.leaves() else np.zeros(0)

    def param_names(self) -> list[str]:
        names = []
        for i, leaf in enumerate(self.leaves()):
            names.extend(f"{name}[{i}]" for name in leaf._leaf_param_names())
        return names

    def with_log_params(self, values) -> "Kernel":
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_params,):
            raise KernelError(
                f"expected {self.n_params} log parameters, got shape {values.shape}")
        out, used = self._rebuild(values, 0)
        assert used == values.shape[0]
        return out

    def _rebuild(self, values, offset) -> tuple["Kernel", int]:
        raise NotImplementedError

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(frozen=True)
class Leaf(Kernel):
    """Stationary kernel on the Euclidean distance over ``dims``."""

    variance: float
    lengthscale: float
    dims: tuple[int, ...] = (0,)

    def __post_init__(self):
        _check_positive("variance", self.variance)
        _check_positive("lengthscale", self.lengthscale)
        object.__setattr__(self, "dims", _check_dims(self.dims))

    def from_distance(self, d):
        """Covariance as a function of distance (elementwise on arrays)."""
        raise NotImplementedError

    def _distance(self, X, X2):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
        hi = max(self.dims)
        if X.shape[1] <= hi or X2.shape[1] <= hi:
            raise KernelError(
                f"active dims {self.dims} exceed feature dimensionality "
                f"{min(X.shape[1], X2.shape[1])}")
        return pairwise_distance(X[:, self.dims], X2[:, self.dims])

    def gram(self, X, X2=None):
        return self.from_distance(self._distance(X, X2))

    def diag(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.full(X.shape[0], self.variance, dtype=float)

    def leaves(self):
        return [self]

    def _n_leaf_params(self) -> int:
        return len(self._leaf_param_names())

    def _leaf_param_names(self) -> tuple[str, ...]:
        return ("variance", "lengthscale")

    def _leaf_log_params(self) -> np.ndarray:
        return np.log([getattr(self, name) for name in self._leaf_param_names()])

    def _rebuild(self, values, offset):
        k = self._n_leaf_params()
        updates = {
            name: math.exp(values[offset + j])
            for j, name in enumerate(self._leaf_param_names())
        }
        return replace(self, **updates), offset + k


@dataclass(frozen=True)
class SquaredExp(Leaf):
    def from_distance(self, d):
        d = np.asarray(d, dtype=float)
        return self.variance * np.exp(-0.5 * (d / self.lengthscale) ** 2)

    def gram_with_grads(self, X):
        D = self._distance(X, None)
        K = self.from_distance(D)
        return K, [K, K * (D / self.lengthscale) ** 2]

    def to_dict(self):
        return {"kind": "se", "dims": list(self.dims),
                "variance": self.variance, "lengthscale": self.lengthscale}


@dataclass(frozen=True)
class Periodic(Leaf):
    period: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        _check_positive("period", self.period)

    def from_distance(self, d):
        d = np.asarray(d, dtype=float)
        s = np.sin(np.pi * d / self.period)
        return self.variance * np.exp(-2.0 * s * s / self.lengthscale**2)

    def _leaf_param_names(self):
        return ("variance", "lengthscale", "period")

    def gram_with_grads(self, X):
        D = self._distance(X, None)
        t2 = self.lengthscale**2
        u = np.pi * D / self.period
        s = np.sin(u)
        K = self.variance * np.exp(-2.0 * s * s / t2)
        d_tau = K * 4.0 * s * s / t2
        d_rho = K * (2.0 * np.pi * D / (t2 * self.period)) * np.sin(2.0 * u)
        return K, [K, d_tau, d_rho]

    def to_dict(self):
        return {"kind": "periodic", "dims": list(self.dims),
                "variance": self.variance, "lengthscale": self.lengthscale,
                "period": self.period}


@dataclass(frozen=True)
class Matern(Leaf):
    nu: float = 1.5

    def __post_init__(self):
        super().__post_init__()
        if self.nu not in MATERN_ORDERS:
            raise KernelError(
                f"unsupported Matern smoothness {self.nu!r}; "
                f"closed forms exist for {MATERN_ORDERS}")

    def from_distance(self, d):
        d = np.asarray(d, dtype=float)
        if self.nu == 0.5:
            return self.variance * np.exp(-d / self.lengthscale)
        if self.nu == 1.5:
            a = math.sqrt(3.0) * d / self.lengthscale
            return self.variance * (1.0 + a) * np.exp(-a)
        a = math.sqrt(5.0) * d / self.lengthscale
        return self.variance * (1.0 + a + a * a / 3.0) * np.exp(-a)

    def gram_with_grads(self, X):
        D = self._distance(X, None)
        K = self.from_distance(D)
        if self.nu == 0.5:
            d_tau = K * (D / self.lengthscale)
        elif self.nu == 1.5:
            a = math.sqrt(3.0) * D / self.lengthscale
            d_tau = self.variance * a * a * np.exp(-a)
        else:
            a = math.sqrt(5.0) * D / self.lengthscale
            d_tau = self.variance * (a * a / 3.0) * (1.0 + a) * np.exp(-a)
        return K, [K, d_tau]

    def to_dict(self):
        return {"kind": "matern", "dims": list(self.dims),
                "variance": self.variance, "lengthscale": self.lengthscale,
                "nu": self.nu}


@dataclass(frozen=True)
class _Combiner(Kernel):
    terms: tuple[Kernel, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise KernelError("composite kernels need at least one term")
        if not all(isinstance(t, Kernel) for t in terms):
            raise KernelError("composite terms must be kernel expressions")
        object.__setattr__(self, "terms", terms)

    def leaves(self):
        out = []
        for t in self.terms:
            out.extend(t.leaves())
        return out

    def _rebuild(self, values, offset):
        rebuilt = []
        for t in self.terms:
            new, offset = t._rebuild(values, offset)
            rebuilt.append(new)
        return replace(self, terms=tuple(rebuilt)), offset


@dataclass(frozen=True)
class Sum(_Combiner):
    def gram(self, X, X2=None):
        out = self.terms[0].gram(X, X2)
        for t in self.terms[1:]:
            out = out + t.gram(X, X2)
        return out

    def diag(self, X):
        out = self.terms[0].diag(X)
        for t in self.terms[1:]:
            out = out + t.diag(X)
        return out

    def gram_with_grads(self, X):
        K = None
        grads = []
        for t in self.terms:
            Kt, gt = t.gram_with_grads(X)
            K = Kt if K is None else K + Kt
            grads.extend(gt)
        return K, grads

    def to_dict(self):
        return {"sum": [t.to_dict() for t in self.terms]}


@dataclass(frozen=True)
class Product(_Combiner):
    def gram(self, X, X2=None):
        out = self.terms[0].gram(X, X2)
        for t in self.terms[1:]:
            out = out * t.gram(X, X2)
        return out

    def diag(self, X):
        out = self.terms[0].diag(X)
        for t in self.terms[1:]:
            out = out * t.diag(X)
        return out

    def gram_with_grads(self, X):
        parts = [t.gram_with_grads(X) for t in self.terms]
        K = parts[0][0].copy()
        for Kt, _ in parts[1:]:
            K *= Kt
        grads = []
        for i, (Ki, gi) in enumerate(parts):
            rest = None
            for j, (Kj, _) in enumerate(parts):
                if j == i:
                    continue
                rest = Kj.copy() if rest is None else rest * Kj
            for g in gi:
                grads.append(g if rest is None else g * rest)
        return K, grads

    def to_dict(self):
        return {"product": [t.to_dict() for t in self.terms]}


_LEAF_KINDS = {"se": SquaredExp, "periodic": Periodic, "matern": Matern}


def from_dict(spec: dict) -> Kernel:
    """Parse the structured form produced by ``Kernel.to_dict``.

    Leaves are objects with keys "kind", "dims", "variance", "lengthscale"
    and, where applicable, "period" or "nu"; composites are {"sum": [...]}
    or {"product": [...]}.
    """
    if not isinstance(spec, dict):
        raise KernelError(f"kernel spec must be an object, got {type(spec).__name__}")
    if "sum" in spec:
        return Sum(tuple(from_dict(s) for s in spec["sum"]))
    if "product" in spec:
        return Product(tuple(from_dict(s) for s in spec["product"]))
    kind = str(spec.get("kind", "")).lower()
    if kind not in _LEAF_KINDS:
        raise KernelError(f"unknown kernel kind {spec.get('kind')!r}")
    kwargs = {
        "variance": float(spec["variance"]),
        "lengthscale": float(spec["lengthscale"]),
        "dims": tuple(spec.get("dims", (0,))),
    }
    if kind == "periodic":
        kwargs["period"] = float(spec["period"])
    if kind == "matern":
        kwargs["nu"] = float(spec.get("nu", 1.5))
    return _LEAF_KINDS[kind](**kwargs)


def from_json(text: str) -> Kernel:
    return from_dict(json.loads(text))
