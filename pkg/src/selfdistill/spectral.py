"""Fixed-design problem instances and their spectral decomposition.

Conventions: the data matrix ``X`` is ``d x n`` with covariates as columns, so
the ridge solution is ``(X X^T + lam I)^{-1} X y``. Every closed-form risk
formula in the package reads an instance through its :class:`Spectrum`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import InputError

DEFAULT_RANK_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Spectrum:
    """Thin-plus-full SVD of a ``d x n`` matrix.

    ``singular_values`` has length ``min(d, n)``; ``left_vectors`` is the full
    ``d x d`` orthonormal basis; ``right_vectors`` is ``n x min(d, n)``.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    rank: int
    rank_tolerance: float = DEFAULT_RANK_TOL

    @property
    def d(self) -> int:
        return self.left_vectors.shape[0]

    @property
    def s_full(self) -> np.ndarray:
        """Singular values zero-padded to length ``d``."""
        out = np.zeros(self.d)
        out[: self.singular_values.size] = self.singular_values
        return out

    @property
    def s_rank(self) -> np.ndarray:
        """The ``rank`` nonzero singular values."""
        return self.singular_values[: self.rank]

    def reconstruct(self) -> np.ndarray:
        m = self.singular_values.size
        return (self.left_vectors[:, :m] * self.singular_values) @ self.right_vectors.T


def decompose(x_matrix, rank_tolerance: float = DEFAULT_RANK_TOL) -> Spectrum:
    """SVD of ``x_matrix`` with numerical rank ``#{s_j > tol * s_1}``."""
    x = np.asarray(x_matrix, dtype=float)
    if x.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("matrix has non-finite entries")
    if not 0.0 < rank_tolerance < 1.0:
        raise InputError(f"rank_tolerance must lie in (0, 1), got {rank_tolerance}")
    d, n = x.shape
    u, s, vt = np.linalg.svd(x, full_matrices=True)
    m = min(d, n)
    rank = 0 if s.size == 0 or s[0] == 0.0 else int(np.sum(s > rank_tolerance * s[0]))
    return Spectrum(
        singular_values=_frozen(s[:m]),
        left_vectors=_frozen(u),
        right_vectors=_frozen(vt[:m].T),
        rank=rank,
        rank_tolerance=rank_tolerance,
    )


@dataclass(frozen=True)
class ProblemInstance:
    """Fixed-design triple ``(X, theta*, gamma^2)`` with cached spectrum.

    A precomputed ``spectrum`` may be supplied (synthetic generators know the
    exact factors); it is checked against ``x_matrix`` before being accepted.
    """

    x_matrix: np.ndarray
    theta_star: np.ndarray
    gamma2: float
    spectrum: Spectrum = field(default=None)  # type: ignore[assignment]
    rank_tolerance: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        x = np.asarray(self.x_matrix, dtype=float)
        theta = np.asarray(self.theta_star, dtype=float).ravel()
        if x.ndim != 2:
            raise InputError("x_matrix must be 2-D (d x n)")
        if theta.size != x.shape[0]:
            raise InputError(f"theta_star has length {theta.size}, expected d={x.shape[0]}")
        if not np.all(np.isfinite(theta)):
            raise InputError("theta_star has non-finite entries")
        gamma2 = float(self.gamma2)
        if not np.isfinite(gamma2) or gamma2 < 0:
            raise InputError(f"gamma2 must be finite and >= 0, got {gamma2}")
        spec = self.spectrum
        if spec is None:
            spec = decompose(x, self.rank_tolerance)
        else:
            if spec.left_vectors.shape[0] != x.shape[0] or spec.right_vectors.shape[0] != x.shape[1]:
                raise InputError("supplied spectrum does not match x_matrix shape")
            err = np.linalg.norm(spec.reconstruct() - x)
            scale = max(np.linalg.norm(x), 1e-300)
            if err > 1e-8 * scale:
                raise InputError(f"supplied spectrum fails reconstruction (rel err {err / scale:.2e})")
        object.__setattr__(self, "x_matrix", _frozen(x))
        object.__setattr__(self, "theta_star", _frozen(theta))
        object.__setattr__(self, "gamma2", gamma2)
        object.__setattr__(self, "spectrum", spec)

    @property
    def d(self) -> int:
        return self.x_matrix.shape[0]

    @property
    def n_samples(self) -> int:
        return self.x_matrix.shape[1]

    @property
    def rank(self) -> int:
        return self.spectrum.rank

    def components(self) -> np.ndarray:
        return theta_components(self).components

    def sample_response(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """``y = X^T theta* + eps`` with Gaussian noise of variance ``gamma2``.

        With ``size`` given, returns an ``n x size`` matrix of independent draws.
        """
        mean = self.x_matrix.T @ self.theta_star
        sd = np.sqrt(self.gamma2)
        if size is None:
            return mean + sd * rng.standard_normal(self.n_samples)
        return mean[:, None] + sd * rng.standard_normal((self.n_samples, size))

    def to_dict(self) -> dict:
        return {
            "x_matrix": self.x_matrix.tolist(),
            "theta_star": self.theta_star.tolist(),
            "gamma2": self.gamma2,
            "rank_tolerance": self.rank_tolerance,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ProblemInstance":
        return cls(
            x_matrix=np.array(payload["x_matrix"], dtype=float),
            theta_star=np.array(payload["theta_star"], dtype=float),
            gamma2=float(payload["gamma2"]),
            rank_tolerance=float(payload.get("rank_tolerance", DEFAULT_RANK_TOL)),
        )


@dataclass(frozen=True)
class ThetaComponents:
    """Squared projections ``<theta*, u_j>^2`` for ``j = 1..d``."""

    components: np.ndarray


def theta_components(instance: ProblemInstance) -> ThetaComponents:
    proj = instance.spectrum.left_vectors.T @ instance.theta_star
    return ThetaComponents(components=_frozen(proj * proj))


ThetaSpec = Union[str, Sequence[float], np.ndarray]


def _theta_coefficients(theta_spec: ThetaSpec, d: int, r: int) -> np.ndarray:
    """Coefficients of theta* in the left singular basis."""
    coeffs = np.zeros(d)
    if isinstance(theta_spec, str):
        key = theta_spec.lower()
        if key == "u1":
            coeffs[0] = 1.0
        elif key == "ur":
            coeffs[r - 1] = 1.0
        elif key == "u1u2":
            if r < 2:
                raise InputError("theta_spec 'u1u2' needs r >= 2")
            coeffs[:2] = 1.0 / np.sqrt(2.0)
        elif key == "equal":
            coeffs[:r] = 1.0 / np.sqrt(r)
        else:
            raise InputError(f"unknown theta_spec {theta_spec!r}")
        return coeffs
    given = np.asarray(theta_spec, dtype=float).ravel()
    if given.size > d:
        raise InputError(f"theta_spec has {given.size} coefficients for d={d}")
    coeffs[: given.size] = given
    return coeffs


def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    # sign fix makes the factor a deterministic function of the Gaussian draw
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def make_synthetic(
    d: int,
    r: int,
    singular_values: Sequence[float],
    theta_spec: ThetaSpec,
    gamma: float,
    n: int,
    seed: int = 0,
    theta_norm: float = 1.0,
    identity_bases: bool = False,
) -> ProblemInstance:
    """Instance with prescribed nonzero singular values and theta* direction.

    ``theta_spec`` is one of ``"u1"``, ``"ur"``, ``"u1u2"``, ``"equal"`` or an
    explicit coefficient vector over ``u_1, u_2, ...``; the resulting direction
    is multiplied by ``theta_norm`` (the named recipes are unit norm).
    Bases are orthonormal factors of seeded Gaussian matrices unless
    ``identity_bases`` is set.
    """
    s = np.asarray(singular_values, dtype=float).ravel()
    if r < 0 or d < 1 or n < 1:
        raise InputError("need d >= 1, n >= 1, r >= 0")
    if r > min(d, n):
        raise InputError(f"rank r={r} exceeds min(d, n)={min(d, n)}")
    if s.size != r:
        raise InputError(f"expected {r} singular values, got {s.size}")
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise InputError("singular values must be finite and strictly positive")
    if gamma < 0:
        raise InputError("gamma must be >= 0")
    order = np.argsort(-s, kind="stable")
    s = s[order]

    m = min(d, n)
    if identity_bases:
        u = np.eye(d)
        v = np.eye(n)[:, :m]
    else:
        rng = np.random.default_rng(seed)
        u = _orthonormal(rng, d, d)
        v = _orthonormal(rng, n, m)
    s_m = np.zeros(m)
    s_m[:r] = s
    x = (u[:, :r] * s) @ v[:, :r].T
    spec = Spectrum(
        singular_values=_frozen(s_m),
        left_vectors=_frozen(u),
        right_vectors=_frozen(v),
        rank=r,
        rank_tolerance=DEFAULT_RANK_TOL,
    )
    theta = u @ (theta_norm * _theta_coefficients(theta_spec, d, r))
    return ProblemInstance(x_matrix=x, theta_star=theta, gamma2=float(gamma) ** 2, spectrum=spec)


def power_law_singular_values(r: int, s_first: float = 1.0, s_last: float = 0.8) -> np.ndarray:
    """``s_j = s_first * j^{-p}`` with ``p`` chosen so that ``s_r = s_last``."""
    if r == 1:
        return np.array([s_first])
    p = np.log(s_first / s_last) / np.log(r)
    return s_first * np.arange(1, r + 1, dtype=float) ** (-p)
