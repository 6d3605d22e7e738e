"""Value types and dense-matrix helpers shared across the package.

Everything here is small and dense: symmetric covariance matrices, estimate
vectors, linear measurement models, and the block feasibility test for
cross-covariances.  All types are immutable after construction (backing
arrays are marked read-only), so they can be shared freely between
concurrent tasks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: absolute tolerance on the minimum eigenvalue accepted as "PSD"
PSD_TOL = 1e-9
#: minimum eigenvalue required of strictly positive definite inputs
STRICT_PD_FLOOR = 1e-12
#: absolute tolerance for treating a matrix as symmetric
SYM_TOL = 1e-9


class DimensionError(ValueError):
    """Shapes of the supplied matrices or vectors do not conform."""


class SingularMatrixError(ValueError):
    """A matrix that must be invertible is singular or indefinite."""


class FeasibilityError(ValueError):
    """A cross-covariance lies on or outside its feasible region."""


class ConvergenceError(RuntimeError):
    """An iterative solve stopped before reaching its tolerance."""

    def __init__(self, message: str, residual_norm: float | None = None):
        super().__init__(message)
        self.residual_norm = residual_norm


def _as_matrix(value, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(getattr(value, "data", value), dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def _as_square(value, name: str = "matrix") -> np.ndarray:
    arr = _as_matrix(value, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def symmetrize(matrix) -> np.ndarray:
    """Return (M + M^T)/2 for a square matrix M."""
    arr = _as_square(matrix)
    return 0.5 * (arr + arr.T)


def is_psd(matrix, tol: float = PSD_TOL) -> bool:
    """True iff the symmetric matrix has minimum eigenvalue >= -tol.

    The check is eigenvalue based (not a Cholesky attempt) so the tolerance
    has an explicit meaning on the spectrum; boundary cases in the fusion
    problem sit exactly at singularity.  Raises DimensionError for
    non-square or visibly asymmetric input.
    """
    arr = _as_square(matrix)
    if arr.size and np.max(np.abs(arr - arr.T)) > SYM_TOL:
        raise DimensionError("is_psd requires a symmetric matrix")
    if arr.size == 0:
        return True
    w = np.linalg.eigvalsh(0.5 * (arr + arr.T))
    return bool(w[0] >= -tol)


def inv_sqrt(cov) -> np.ndarray:
    """Symmetric S with S @ Sigma @ S = I, for strictly PD Sigma."""
    arr = symmetrize(cov)
    w, v = np.linalg.eigh(arr)
    if w.size and w[0] < STRICT_PD_FLOOR:
        raise SingularMatrixError(
            f"matrix is not strictly positive definite (min eigenvalue {w[0]:.3e})"
        )
    s = (v / np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def cross_feasible(sigma_xx, sigma_yy, cross, tol: float = PSD_TOL) -> bool:
    """True iff [[Sxx, Q], [Q^T, Syy]] is PSD within tol.

    This is the feasibility condition for Q to be a valid cross-covariance
    between estimates whose marginal covariances are Sxx and Syy.
    """
    sxx = _as_square(sigma_xx, "sigma_xx")
    syy = _as_square(sigma_yy, "sigma_yy")
    q = _as_matrix(cross, "cross")
    if q.shape != (sxx.shape[0], syy.shape[0]):
        raise DimensionError(
            f"cross-covariance shape {q.shape} does not match "
            f"({sxx.shape[0]}, {syy.shape[0]})"
        )
    block = np.block([[sxx, q], [q.T, syy]])
    return is_psd(block, tol)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric PSD matrix with units of squared state.

    Construction symmetrizes the input and rejects matrices whose minimum
    eigenvalue falls below -PSD_TOL.  Use `strict` for inputs that must be
    invertible (minimum eigenvalue >= STRICT_PD_FLOOR).
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.data, "covariance")
        if arr.shape[0] == 0:
            raise DimensionError("covariance dimension must be positive")
        arr = 0.5 * (arr + arr.T)
        w = np.linalg.eigvalsh(arr)
        if w[0] < -PSD_TOL:
            raise ValueError(
                f"covariance is not positive semidefinite (min eigenvalue {w[0]:.3e})"
            )
        object.__setattr__(self, "data", _freeze(arr))
        object.__setattr__(self, "_min_eig", float(w[0]))

    @classmethod
    def strict(cls, data) -> "CovarianceMatrix":
        cov = cls(data)
        if cov.min_eig < STRICT_PD_FLOOR:
            raise SingularMatrixError(
                f"covariance is not strictly positive definite "
                f"(min eigenvalue {cov.min_eig:.3e})"
            )
        return cov

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def min_eig(self) -> float:
        return self._min_eig  # type: ignore[attr-defined]

    def require_strictly_pd(self, name: str = "covariance") -> None:
        if self.min_eig < STRICT_PD_FLOOR:
            raise SingularMatrixError(
                f"{name} must be strictly positive definite "
                f"(min eigenvalue {self.min_eig:.3e})"
            )

    def to_json(self) -> dict:
        return {"dim": self.dim, "data": self.data.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "CovarianceMatrix":
        cov = cls(np.asarray(obj["data"], dtype=float))
        if "dim" in obj and int(obj["dim"]) != cov.dim:
            raise DimensionError(
                f"declared dim {obj['dim']} does not match data shape {cov.dim}"
            )
        return cov


@dataclass(frozen=True, eq=False)
class Estimate:
    """A mean vector paired with its claimed error covariance."""

    mean: np.ndarray
    cov: CovarianceMatrix

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        if mean.shape[0] != self.cov.dim:
            raise DimensionError(
                f"mean length {mean.shape[0]} does not match covariance dim {self.cov.dim}"
            )
        object.__setattr__(self, "mean", _freeze(mean.reshape(-1)))

    @property
    def dim(self) -> int:
        return self.cov.dim

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "Estimate":
        return cls(np.asarray(obj["mean"], dtype=float), CovarianceMatrix.from_json(obj["cov"]))


@dataclass(frozen=True, eq=False)
class CrossCovariance:
    """Candidate cross-covariance between two estimates (n x q)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(_as_matrix(self.data, "cross-covariance")))

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def to_json(self) -> list:
        return self.data.tolist()

    @classmethod
    def from_json(cls, obj) -> "CrossCovariance":
        return cls(np.asarray(obj, dtype=float))


@dataclass(frozen=True, eq=False)
class LinearMeasurementModel:
    """Measurement z = C x + D y + eta with noise covariance Sigma_eta.

    C maps the state being updated, D maps the auxiliary estimate, and the
    noise is independent of both.
    """

    C: np.ndarray
    D: np.ndarray
    noise_cov: CovarianceMatrix

    def __post_init__(self):
        c = _as_matrix(self.C, "C")
        d = _as_matrix(self.D, "D")
        if c.shape[0] != d.shape[0]:
            raise DimensionError(
                f"C and D must have the same number of rows, got {c.shape[0]} and {d.shape[0]}"
            )
        if self.noise_cov.dim != c.shape[0]:
            raise DimensionError(
                f"noise covariance dim {self.noise_cov.dim} does not match "
                f"measurement dim {c.shape[0]}"
            )
        object.__setattr__(self, "C", _freeze(c))
        object.__setattr__(self, "D", _freeze(d))

    @property
    def meas_dim(self) -> int:
        return self.C.shape[0]

    @property
    def state_dim(self) -> int:
        return self.C.shape[1]

    @property
    def aux_dim(self) -> int:
        return self.D.shape[1]

    def check_dims(self, ex: Estimate, ey: Estimate) -> None:
        if ex.dim != self.state_dim:
            raise DimensionError(
                f"C has {self.state_dim} columns but the state estimate has dim {ex.dim}"
            )
        if ey.dim != self.aux_dim:
            raise DimensionError(
                f"D has {self.aux_dim} columns but the auxiliary estimate has dim {ey.dim}"
            )

    def to_json(self) -> dict:
        return {
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "noise_cov": self.noise_cov.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LinearMeasurementModel":
        return cls(
            np.asarray(obj["C"], dtype=float),
            np.asarray(obj["D"], dtype=float),
            CovarianceMatrix.from_json(obj["noise_cov"]),
        )


def simple_fusion_model(dim: int) -> LinearMeasurementModel:
    """Model with C = I, D = -I, zero noise: fusing two estimates of one mean."""
    eye = np.eye(dim)
    return LinearMeasurementModel(eye, -eye, CovarianceMatrix(np.zeros((dim, dim))))
