"""Closed subgroups of O(d): membership, projection, sampling and rho.

Group elements are plain ``(d, d)`` float arrays. Every projection accepts
either a single matrix or a stack of shape ``(..., d, d)``, so that the
block-wise projection used by the solver is one vectorised call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

ORTHOGONAL = "O"
SPECIAL_ORTHOGONAL = "SO"
PERMUTATION = "P"
CYCLIC = "Z"

KINDS = (ORTHOGONAL, SPECIAL_ORTHOGONAL, PERMUTATION, CYCLIC)

_KIND_ALIASES = {
    "o": ORTHOGONAL,
    "orthogonal": ORTHOGONAL,
    "so": SPECIAL_ORTHOGONAL,
    "specialorthogonal": SPECIAL_ORTHOGONAL,
    "special_orthogonal": SPECIAL_ORTHOGONAL,
    "p": PERMUTATION,
    "permutation": PERMUTATION,
    "z": CYCLIC,
    "cyclic": CYCLIC,
}

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class GroupSpec:
    """Which subgroup of O(d) is being synchronised.

    ``kind`` is one of ``"O"``, ``"SO"``, ``"P"``, ``"Z"``. For the cyclic
    group ``d`` is always 2 and ``m`` is its order.
    """

    kind: str
    d: int = 2
    m: Optional[int] = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ValueError(f"unknown group kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == CYCLIC:
            if self.m is None or int(self.m) < 1:
                raise ValueError("cyclic group needs an order m >= 1")
            object.__setattr__(self, "m", int(self.m))
            object.__setattr__(self, "d", 2)
        else:
            if self.m is not None:
                raise ValueError(f"order m only applies to the cyclic group, not {kind}")
            if int(self.d) < 1:
                raise ValueError(f"element dimension must be >= 1, got {self.d}")
            object.__setattr__(self, "d", int(self.d))

    @classmethod
    def orthogonal(cls, d: int) -> "GroupSpec":
        return cls(ORTHOGONAL, d)

    @classmethod
    def special_orthogonal(cls, d: int) -> "GroupSpec":
        return cls(SPECIAL_ORTHOGONAL, d)

    @classmethod
    def permutation(cls, d: int) -> "GroupSpec":
        return cls(PERMUTATION, d)

    @classmethod
    def cyclic(cls, m: int) -> "GroupSpec":
        return cls(CYCLIC, 2, m)

    @property
    def is_discrete(self) -> bool:
        return self.kind in (PERMUTATION, CYCLIC)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": self.d}
        if self.kind == CYCLIC:
            out["m"] = self.m
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GroupSpec":
        if "kind" not in data:
            raise ValueError("group spec is missing 'kind'")
        return cls(data["kind"], int(data.get("d", 2)), data.get("m"))

    def __str__(self):
        if self.kind == CYCLIC:
            return f"Z_{self.m}"
        return f"{self.kind}({self.d})"


def rho(spec: GroupSpec) -> float:
    """Constant of the projection inequality: 1, or 1/sin(pi/m) for Z_m with m >= 3."""
    if spec.kind == CYCLIC and spec.m >= 3:
        return 1.0 / math.sin(math.pi / spec.m)
    return 1.0


def cyclic_element(k, m: int) -> np.ndarray:
    """Rotation by ``2*pi*k/m``; ``k`` may be an integer array."""
    angle = 2.0 * np.pi * np.asarray(k, dtype=float) / m
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _check_input(spec: GroupSpec, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim < 2 or X.shape[-2:] != (spec.d, spec.d):
        raise ValueError(f"expected (..., {spec.d}, {spec.d}) input for {spec}, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("projection input has non-finite entries")
    return X


def project_orthogonal(X) -> np.ndarray:
    """Nearest orthogonal matrix, ``U V^T`` from the SVD ``X = U S V^T``."""
    U, _, Vt = np.linalg.svd(np.asarray(X, dtype=float))
    return U @ Vt


def project_special_orthogonal(X) -> np.ndarray:
    """Nearest rotation by the Kabsch correction ``U diag(1,..,1,det(U V^T)) V^T``."""
    U, _, Vt = np.linalg.svd(np.asarray(X, dtype=float))
    sign = np.sign(np.linalg.det(U @ Vt))
    sign = np.where(sign == 0, 1.0, sign)
    U = U.copy()
    U[..., :, -1] *= sign[..., None]
    return U @ Vt


def _assignment(X: np.ndarray) -> np.ndarray:
    rows, cols = linear_sum_assignment(X, maximize=True)
    Q = np.zeros_like(X)
    Q[rows, cols] = 1.0
    return Q


def project_permutation(X) -> np.ndarray:
    """Permutation matrix maximising ``<X, Q>`` (exact assignment)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        return _assignment(X)
    flat = X.reshape(-1, *X.shape[-2:])
    return np.stack([_assignment(x) for x in flat]).reshape(X.shape)


def cyclic_index(X, m: int):
    """Index ``k`` of the nearest ``Q_k`` in Z_m, plus a degeneracy mask.

    Closed form: the angle theta of the point (x21 - x12, x11 + x22) is rounded
    onto the grid of group angles, using whichever of the two peaks of sine
    the admissible range reaches. When x11 + x22 = x21 - x12 = 0 the angle is
    undefined; index 0 is returned and the mask is set.
    """
    X = np.asarray(X, dtype=float)
    a = X[..., 0, 0] + X[..., 1, 1]
    b = X[..., 1, 0] - X[..., 0, 1]
    radius = np.hypot(a, b)
    degenerate = radius == 0.0
    if m == 1:
        return np.zeros(a.shape, dtype=int), degenerate
    cos_theta = np.clip(b / np.where(degenerate, 1.0, radius), -1.0, 1.0)
    theta = np.arccos(cos_theta)
    theta = np.where(a >= 0, theta, 2.0 * np.pi - theta)
    near = m / 4.0 - m * theta / (2.0 * np.pi)
    far = 5.0 * m / 4.0 - m * theta / (2.0 * np.pi)
    target = np.where(theta <= np.pi / 2.0 + np.pi / m, near, far)
    k = np.floor(target + 0.5).astype(int) % m
    k = np.where(degenerate, 0, k)
    return k, degenerate


def project_cyclic(X, m: int) -> np.ndarray:
    """Nearest element of Z_m (degenerate inputs map to the identity)."""
    k, _ = cyclic_index(X, m)
    return cyclic_element(k, m)


def project(spec: GroupSpec, X) -> np.ndarray:
    """Project a ``(d, d)`` matrix, or a stack of them, onto the group.

    Returns a maximiser of ``<X, Q>`` over the group. When several maximisers
    exist an arbitrary (but deterministic) one is returned.
    """
    X = _check_input(spec, X)
    if spec.kind == ORTHOGONAL:
        return project_orthogonal(X)
    if spec.kind == SPECIAL_ORTHOGONAL:
        return project_special_orthogonal(X)
    if spec.kind == PERMUTATION:
        return project_permutation(X)
    return project_cyclic(X, spec.m)


def is_member(spec: GroupSpec, Q, tol: float = MEMBERSHIP_TOL) -> bool:
    Q = np.asarray(Q, dtype=float)
    d = spec.d
    if Q.shape != (d, d) or not np.all(np.isfinite(Q)):
        return False
    if np.linalg.norm(Q.T @ Q - np.eye(d)) > tol:
        return False
    if spec.kind in (SPECIAL_ORTHOGONAL, CYCLIC) and abs(np.linalg.det(Q) - 1.0) > tol:
        return False
    if spec.kind == PERMUTATION:
        if not np.all((Q == 0.0) | (Q == 1.0)):
            return False
        return bool(np.all(Q.sum(0) == 1) and np.all(Q.sum(1) == 1))
    if spec.kind == CYCLIC:
        k = int(np.round(np.arctan2(Q[1, 0], Q[0, 0]) * spec.m / (2 * np.pi))) % spec.m
        return bool(np.linalg.norm(Q - cyclic_element(k, spec.m)) <= tol)
    return True


def _haar_orthogonal(d: int, size: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((size, d, d))
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs = np.where(signs == 0, 1.0, signs)
    return Q * signs[:, None, :]


def sample_uniform(spec: GroupSpec, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Draw Haar-uniform group elements.

    Returns one ``(d, d)`` matrix, or ``(size, d, d)`` when ``size`` is given.
    """
    count = 1 if size is None else int(size)
    d = spec.d
    if spec.kind == ORTHOGONAL:
        out = _haar_orthogonal(d, count, rng)
    elif spec.kind == SPECIAL_ORTHOGONAL:
        out = _haar_orthogonal(d, count, rng)
        flip = np.linalg.det(out) < 0
        out[flip, :, 0] *= -1.0
    elif spec.kind == PERMUTATION:
        out = np.zeros((count, d, d))
        for s in range(count):
            out[s, np.arange(d), rng.permutation(d)] = 1.0
    else:
        out = cyclic_element(rng.integers(0, spec.m, size=count), spec.m)
    return out[0] if size is None else out
