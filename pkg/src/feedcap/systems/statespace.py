"""
Linear state-space containers and the small linear-algebra toolkit the
Riccati, channel and capacity layers are built on.

Conventions:
    - Systems are discrete time, ``x[t+1] = A x[t] + B u[t]``,
      ``y[t] = C x[t] + D u[t]``.
    - ``companion_form`` reads the characteristic polynomial off the last
      row: for last row ``[c0, c1, ..., cn]`` the polynomial is
      ``z^(n+1) - cn z^n - ... - c1 z - c0`` and ``det = (-1)^n c0``.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Union
import logging

import numpy as np
from scipy import linalg

from feedcap.config import NUMERICS_CONFIG
from feedcap.exceptions import DimensionError, SingularEquationError, SingularityError

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[Any], np.ndarray, float]


def _as_array(value: ArrayLike, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.size != rows * cols:
        raise DimensionError(f"{name} must have shape {(rows, cols)}, got {arr.shape}")
    if arr.ndim == 2 and arr.size and arr.shape != (rows, cols):
        raise DimensionError(f"{name} must have shape {(rows, cols)}, got {arr.shape}")
    arr = arr.reshape(rows, cols).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    """Realization (A, B, C, D) with shape checks; immutable once built."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if D.ndim != 2:
            raise DimensionError(f"D must be a matrix, got shape {D.shape}")
        n_out, n_in = D.shape
        n = int(round(np.sqrt(np.size(self.A))))
        object.__setattr__(self, "A", _as_array(self.A, n, n, "A"))
        object.__setattr__(self, "B", _as_array(self.B, n, n_in, "B"))
        object.__setattr__(self, "C", _as_array(self.C, n_out, n, "C"))
        object.__setattr__(self, "D", _as_array(D, n_out, n_in, "D"))

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.D.shape[1]

    @property
    def output_dim(self) -> int:
        return self.D.shape[0]

    @property
    def is_siso(self) -> bool:
        return self.input_dim == 1 and self.output_dim == 1

    def impulse_response(self, T: int) -> np.ndarray:
        """
        Markov parameters h_0..h_T of a SISO system.

        Args:
            T: Last index of the response

        Returns:
            Array of length T+1 with h_0 = D and h_t = C A^(t-1) B
        """
        if not self.is_siso:
            raise DimensionError("Impulse response is defined for SISO systems only")
        h = np.zeros(T + 1)
        h[0] = self.D[0, 0]
        vec = self.B[:, 0].copy()
        for t in range(1, T + 1):
            h[t] = float(self.C[0] @ vec)
            vec = self.A @ vec
        return h

    def simulate(self, u: ArrayLike, x0: Optional[np.ndarray] = None) -> np.ndarray:
        """Run the recursion on a SISO input sequence from x0 (zero by default)."""
        if not self.is_siso:
            raise DimensionError("simulate() supports SISO systems only")
        u = np.asarray(u, dtype=float).ravel()
        x = np.zeros(self.state_dim) if x0 is None else np.asarray(x0, dtype=float).copy()
        y = np.empty_like(u)
        for t, u_t in enumerate(u):
            y[t] = float(self.C[0] @ x) + self.D[0, 0] * u_t
            x = self.A @ x + self.B[:, 0] * u_t
        return y

    def to_dict(self) -> Dict[str, Any]:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "StateSpaceSystem":
        return cls(
            A=payload.get("A", []),
            B=payload.get("B", []),
            C=payload.get("C", []),
            D=payload.get("D", 1.0),
        )

    @classmethod
    def static_gain(cls, gain: float = 1.0) -> "StateSpaceSystem":
        """Memoryless SISO system y = gain * u (state_dim = 0)."""
        return cls(A=np.zeros((0, 0)), B=np.zeros((0, 1)), C=np.zeros((1, 0)), D=[[gain]])


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues classified against the unit circle."""

    eigenvalues: np.ndarray
    unstable_count: int
    unit_circle_count: int
    tolerance: float = field(default=NUMERICS_CONFIG["tau_circ"])

    @property
    def stable_count(self) -> int:
        return len(self.eigenvalues) - self.unstable_count - self.unit_circle_count

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.eigenvalues)

    @property
    def unstable_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.magnitudes > 1.0 + self.tolerance]

    @property
    def spectral_radius(self) -> float:
        return float(self.magnitudes.max()) if len(self.eigenvalues) else 0.0


def _check_square(M: ArrayLike, name: str = "M") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, 0))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def eigen_spectrum(M: ArrayLike, tol: Optional[float] = None) -> Spectrum:
    """
    Eigenvalues of M with unit-circle classification.

    Args:
        M: Square real matrix
        tol: Relative distance from |z| = 1 counted as on the circle

    Returns:
        Spectrum with unstable and unit-circle counts
    """
    tol = NUMERICS_CONFIG["tau_circ"] if tol is None else tol
    M = _check_square(M)
    eigs = np.linalg.eigvals(M) if M.size else np.zeros(0, dtype=complex)
    mags = np.abs(eigs)
    on_circle = np.abs(mags - 1.0) <= tol
    unstable = (mags > 1.0) & ~on_circle
    return Spectrum(
        eigenvalues=eigs.astype(complex),
        unstable_count=int(unstable.sum()),
        unit_circle_count=int(on_circle.sum()),
        tolerance=tol,
    )


def degree_of_instability(M: ArrayLike, tol: Optional[float] = None) -> float:
    """Product of |λ| over eigenvalues strictly outside the unit circle (1 if none)."""
    spectrum = eigen_spectrum(M, tol)
    return float(np.prod(np.abs(spectrum.unstable_eigenvalues)))


def companion_form(top_coeff: float, a_f: ArrayLike) -> np.ndarray:
    """
    Build [[0_(n x 1), I_n], [top_coeff, a_f]].

    Args:
        top_coeff: Entry in the bottom-left corner (±DI for encoder designs)
        a_f: Remaining n entries of the last row

    Returns:
        (n+1) x (n+1) companion matrix
    """
    a_f = np.asarray(a_f, dtype=float).ravel()
    n = a_f.size
    M = np.zeros((n + 1, n + 1))
    M[:n, 1:] = np.eye(n)
    M[n, 0] = top_coeff
    M[n, 1:] = a_f
    return M


def observability_matrix(A: ArrayLike, C: ArrayLike, rows: int) -> np.ndarray:
    """Stack [C; CA; ...; CA^(rows-1)]."""
    A = _check_square(A, "A")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if rows < 1:
        raise DimensionError(f"rows must be at least 1, got {rows}")
    if C.shape[1] != A.shape[0]:
        raise DimensionError(f"C has {C.shape[1]} columns but A is {A.shape}")
    blocks = [C]
    for _ in range(rows - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def is_observable(A: ArrayLike, C: ArrayLike) -> bool:
    A = _check_square(A, "A")
    if A.shape[0] == 0:
        return True
    obs = observability_matrix(A, C, A.shape[0])
    return np.linalg.matrix_rank(obs) == A.shape[0]


def is_controllable(A: ArrayLike, B: ArrayLike) -> bool:
    A = _check_square(A, "A")
    if A.shape[0] == 0:
        return True
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    return is_observable(A.T, B.T)


def solve_sylvester(F: ArrayLike, A: ArrayLike, Q: ArrayLike, tol: Optional[float] = None) -> np.ndarray:
    """
    Solve F phi - phi A = Q by Kronecker vectorization.

    Args:
        F: m x m matrix
        A: k x k matrix
        Q: m x k right-hand side
        tol: Minimum separation between the spectra of F and A

    Returns:
        phi, an m x k matrix

    Raises:
        SingularEquationError: if F and A share an eigenvalue within tol
    """
    tol = NUMERICS_CONFIG["collision_tol"] if tol is None else tol
    F = _check_square(F, "F")
    A = _check_square(A, "A")
    m, k = F.shape[0], A.shape[0]
    Q = np.asarray(Q, dtype=float).reshape(m, k)
    if m == 0 or k == 0:
        return np.zeros((m, k))

    eig_f = np.linalg.eigvals(F)
    eig_a = np.linalg.eigvals(A)
    separation = np.min(np.abs(eig_f[:, None] - eig_a[None, :]))
    if separation <= tol:
        raise SingularEquationError(
            f"Sylvester equation is singular: spectra overlap (separation {separation:.3e})"
        )

    # vec(F phi - phi A) = (I_k (x) F - A' (x) I_m) vec(phi), column-major vec
    operator = np.kron(np.eye(k), F) - np.kron(A.T, np.eye(m))
    phi = np.linalg.solve(operator, Q.reshape(-1, order="F")).reshape(m, k, order="F")

    residual = np.linalg.norm(F @ phi - phi @ A - Q)
    scale = (np.linalg.norm(F) + np.linalg.norm(A)) * max(np.linalg.norm(phi), 1.0)
    if residual > NUMERICS_CONFIG["tau_syl"] * scale:
        raise SingularEquationError(f"Sylvester residual {residual:.3e} exceeds tolerance")
    logger.debug(f"Sylvester solve m={m} k={k} residual={residual:.2e}")
    return phi


@dataclass(frozen=True, eq=False)
class ToeplitzOperator:
    """(Strictly) lower-triangular Toeplitz matrix of an impulse response."""

    impulse: np.ndarray
    strictly_causal: bool = False

    def __post_init__(self):
        h = np.asarray(self.impulse, dtype=float).ravel().copy()
        if h.size == 0:
            raise DimensionError("Impulse response must have at least one sample")
        if self.strictly_causal and h[0] != 0.0:
            raise DimensionError(f"Strictly causal operator requires h0 = 0, got {h[0]}")
        h.setflags(write=False)
        object.__setattr__(self, "impulse", h)

    @property
    def size(self) -> int:
        return self.impulse.size

    def matrix(self) -> np.ndarray:
        return linalg.toeplitz(self.impulse, np.zeros(self.size))

    def apply(self, x: ArrayLike) -> np.ndarray:
        """Causal convolution truncated to the horizon."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.size:
            raise DimensionError(f"Expected length {self.size}, got {x.shape[0]}")
        return np.convolve(self.impulse, x)[: self.size]

    def inverse(self) -> "ToeplitzOperator":
        if self.impulse[0] == 0.0:
            raise SingularEquationError("Strictly causal Toeplitz operator is not invertible")
        e0 = np.zeros(self.size)
        e0[0] = 1.0
        column = linalg.solve_triangular(self.matrix(), e0, lower=True)
        return ToeplitzOperator(column)


def toeplitz_of(sys: StateSpaceSystem, T: int, strictly_causal: bool = False) -> ToeplitzOperator:
    """Finite-horizon Toeplitz operator of a SISO system, size T+1."""
    if not sys.is_siso:
        raise DimensionError("toeplitz_of requires a SISO system")
    if strictly_causal and sys.D[0, 0] != 0.0:
        raise DimensionError("strictly_causal requested but D is nonzero")
    return ToeplitzOperator(sys.impulse_response(T), strictly_causal=strictly_causal)


def frequency_response(sys: StateSpaceSystem, theta: ArrayLike) -> Union[complex, np.ndarray]:
    """
    Evaluate D + C (zI - A)^(-1) B at z = exp(j 2 pi theta).

    Args:
        sys: SISO system
        theta: Normalized frequency or array of frequencies in [-1/2, 1/2]

    Returns:
        Complex response, scalar or array matching theta
    """
    scalar = np.ndim(theta) == 0
    thetas = np.atleast_1d(np.asarray(theta, dtype=float))
    z = np.exp(2j * np.pi * thetas)
    return evaluate_transfer(sys, z if not scalar else z[0])


def evaluate_transfer(sys: StateSpaceSystem, z: Union[complex, np.ndarray]) -> Union[complex, np.ndarray]:
    """Evaluate the SISO transfer function at arbitrary complex points."""
    if not sys.is_siso:
        raise DimensionError("Transfer evaluation requires a SISO system")
    scalar = np.ndim(z) == 0
    points = np.atleast_1d(np.asarray(z, dtype=complex))
    n = sys.state_dim
    d = sys.D[0, 0]
    if n == 0:
        values = np.full(points.shape, d, dtype=complex)
        return complex(values[0]) if scalar else values

    poles = np.linalg.eigvals(sys.A)
    distance = np.min(np.abs(points[:, None] - poles[None, :]))
    if distance <= NUMERICS_CONFIG["tau_circ"]:
        raise SingularityError(f"Evaluation point within {distance:.2e} of a pole")

    identity = np.eye(n)
    values = np.array(
        [d + (sys.C @ np.linalg.solve(p * identity - sys.A, sys.B))[0, 0] for p in points]
    )
    return complex(values[0]) if scalar else values
