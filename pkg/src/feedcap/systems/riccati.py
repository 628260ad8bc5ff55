"""
Singular discrete Riccati machinery for the augmented encoder/channel plant.

The plant has no process noise, so the filtering recursion

    Sigma+ = AA Sigma AA' - AA Sigma CC' CC Sigma AA' / (CC Sigma CC' + 1)

started from blockdiag(I_(n+1), 0_m) converges to a rank-(n+1) stabilizing
fixed point. Two independent routes reach it: plain iteration (authoritative)
and a Sylvester block-diagonalization followed by a reduced Riccati equation
on the encoder block (fast path used inside the optimizer).
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import logging

import numpy as np
from scipy import linalg

from feedcap.config import NUMERICS_CONFIG
from feedcap.exceptions import (
    ConvergenceError,
    DimensionError,
    InfeasibleError,
    StabilizationError,
    UnitCircleError,
)
from feedcap.systems.statespace import eigen_spectrum, solve_sylvester

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AugmentedPlant:
    """
    Encoder and channel stacked into one plant:
    AA = [[A, 0], [G C, F]], CC = [C, H], DD = [C, 0].
    """

    A_bb: np.ndarray
    C_bb: np.ndarray
    D_bb: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        k = self.n + 1
        dim = k + self.m
        A_bb = np.asarray(self.A_bb, dtype=float).reshape(dim, dim)
        C_bb = np.asarray(self.C_bb, dtype=float).reshape(1, dim)
        D_bb = np.asarray(self.D_bb, dtype=float).reshape(1, dim)
        if np.any(A_bb[:k, k:] != 0.0):
            raise DimensionError("Augmented plant must have a zero upper-right block")
        if np.any(D_bb[:, k:] != 0.0) or not np.array_equal(D_bb[:, :k], C_bb[:, :k]):
            raise DimensionError("DD must equal [C, 0] with C the leading block of CC")
        for arr in (A_bb, C_bb, D_bb):
            arr.setflags(write=False)
        object.__setattr__(self, "A_bb", A_bb)
        object.__setattr__(self, "C_bb", C_bb)
        object.__setattr__(self, "D_bb", D_bb)

    @classmethod
    def from_blocks(cls, A, C, F, G, H) -> "AugmentedPlant":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        k = A.shape[0]
        C = np.asarray(C, dtype=float).reshape(1, k)
        F = np.asarray(F, dtype=float)
        m = int(round(np.sqrt(F.size)))
        F = F.reshape(m, m)
        G = np.asarray(G, dtype=float).reshape(m, 1)
        H = np.asarray(H, dtype=float).reshape(1, m)

        A_bb = np.zeros((k + m, k + m))
        A_bb[:k, :k] = A
        A_bb[k:, :k] = G @ C
        A_bb[k:, k:] = F
        C_bb = np.hstack([C, H])
        D_bb = np.hstack([C, np.zeros((1, m))])
        return cls(A_bb=A_bb, C_bb=C_bb, D_bb=D_bb, n=k - 1, m=m)

    @property
    def k(self) -> int:
        return self.n + 1

    @property
    def dim(self) -> int:
        return self.k + self.m

    @property
    def A(self) -> np.ndarray:
        return self.A_bb[: self.k, : self.k]

    @property
    def C(self) -> np.ndarray:
        return self.C_bb[:, : self.k]

    @property
    def F(self) -> np.ndarray:
        return self.A_bb[self.k:, self.k:]

    @property
    def GC(self) -> np.ndarray:
        return self.A_bb[self.k:, : self.k]

    @property
    def H(self) -> np.ndarray:
        return self.C_bb[:, self.k:]


@dataclass
class RiccatiTrajectory:
    """Finite-horizon solution: Sigma_0..Sigma_T, L_0..L_(T-1), K_e,0..K_e,T."""

    sigmas: List[np.ndarray]
    gains: List[np.ndarray]
    ke: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.sigmas) - 1

    def sigma_x(self, t: int, k: int) -> np.ndarray:
        """Encoder block [I, 0] Sigma_t [I, 0]'."""
        return self.sigmas[t][:k, :k]


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Stabilizing steady-state solution with its certificates."""

    sigma: np.ndarray
    gain: np.ndarray
    ke: float
    rank: int
    closed_loop_radius: float
    path: str
    power: float
    residual: float
    iterations: int = 0
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rate_bits(self) -> float:
        return 0.5 * float(np.log2(self.ke))


def initial_condition(n: int, m: int) -> np.ndarray:
    """blockdiag(I_(n+1), 0_m)."""
    if n < 0 or m < 0:
        raise DimensionError(f"n and m must be nonnegative, got n={n}, m={m}")
    sigma0 = np.zeros((n + 1 + m, n + 1 + m))
    sigma0[: n + 1, : n + 1] = np.eye(n + 1)
    return sigma0


def riccati_step(plant: AugmentedPlant, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    One step of the singular Riccati recursion.

    Args:
        plant: Augmented plant
        sigma: Current error covariance Sigma_t

    Returns:
        Tuple of (Sigma_(t+1), gain L_t, innovation variance K_e,t)
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (plant.dim, plant.dim):
        raise DimensionError(f"Sigma must be {(plant.dim, plant.dim)}, got {sigma.shape}")
    a_sigma = plant.A_bb @ sigma
    ke = float(plant.C_bb @ sigma @ plant.C_bb.T) + 1.0
    gain = (a_sigma @ plant.C_bb.T) / ke
    nxt = a_sigma @ plant.A_bb.T - ke * (gain @ gain.T)
    nxt = 0.5 * (nxt + nxt.T)
    return nxt, gain.ravel(), ke


def riccati_trajectory(plant: AugmentedPlant, T: int, sigma0: Optional[np.ndarray] = None) -> RiccatiTrajectory:
    """Run the recursion for T steps from the rank-(n+1) initial condition."""
    sigma = initial_condition(plant.n, plant.m) if sigma0 is None else np.asarray(sigma0, dtype=float)
    sigmas = [sigma]
    gains = []
    ke = []
    for _ in range(T):
        nxt, gain, ke_t = riccati_step(plant, sigma)
        gains.append(gain)
        ke.append(ke_t)
        sigma = nxt
        sigmas.append(sigma)
    ke.append(float(plant.C_bb @ sigma @ plant.C_bb.T) + 1.0)
    return RiccatiTrajectory(sigmas=sigmas, gains=gains, ke=np.array(ke))


def stabilizing_solution(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Stabilizing solution of S = a S a' - a S c' c S a' / (c S c' + 1).

    Modes inside the unit circle carry no covariance. On the block of modes
    outside the circle (isolated by an ordered real Schur form) the inverse
    P = S^-1 solves the Stein equation P = a^-T (P + c'c) a^-1, whose
    dynamics a^-1 are stable, so the solution is unique.

    Args:
        a: Square state matrix without unit-circle eigenvalues
        c: Output row

    Returns:
        Symmetric PSD matrix S
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    k = a.shape[0]
    if a.size == 0:
        return np.zeros((0, 0))
    c = np.asarray(c, dtype=float).reshape(1, k)

    spectrum = eigen_spectrum(a)
    if spectrum.unit_circle_count:
        raise UnitCircleError("State matrix has eigenvalues on the unit circle")
    if spectrum.unstable_count == 0:
        return np.zeros((k, k))

    schur_form, basis, sdim = linalg.schur(a, output="real", sort="ouc")
    t11 = schur_form[:sdim, :sdim]
    z1 = basis[:, :sdim]
    c1 = c @ z1
    t11_inv = np.linalg.inv(t11)
    q = t11_inv.T @ c1.T @ c1 @ t11_inv
    info = linalg.solve_discrete_lyapunov(t11_inv.T, q)
    info = 0.5 * (info + info.T)

    eigs = np.linalg.eigvalsh(info)
    if eigs[0] <= NUMERICS_CONFIG["rank_rel_threshold"] ** 2 * max(eigs[-1], 1.0):
        raise InfeasibleError("Unstable modes are not observable through the output row")
    s11 = np.linalg.inv(info)
    sigma = z1 @ s11 @ z1.T
    return 0.5 * (sigma + sigma.T)


def _certify(plant: AugmentedPlant, sigma: np.ndarray, path: str, iterations: int) -> RiccatiSolution:
    step_sigma, gain, ke = riccati_step(plant, sigma)
    scale = max(np.linalg.norm(sigma, np.inf), 1.0)
    residual = float(np.linalg.norm(step_sigma - sigma, np.inf) / scale)

    closed_loop = plant.A_bb - np.outer(gain, plant.C_bb.ravel())
    radius = eigen_spectrum(closed_loop).spectral_radius
    if radius >= 1.0 - 1e-8:
        raise StabilizationError(f"Fixed point is not stabilizing (closed-loop radius {radius:.6f})")

    singular_values = np.linalg.svd(sigma, compute_uv=False)
    threshold = NUMERICS_CONFIG["rank_rel_threshold"] * (singular_values[0] if singular_values.size else 0.0)
    rank = int(np.sum(singular_values > threshold)) if threshold > 0 else 0
    power = float(plant.D_bb @ sigma @ plant.D_bb.T)

    return RiccatiSolution(
        sigma=sigma,
        gain=gain,
        ke=ke,
        rank=rank,
        closed_loop_radius=radius,
        path=path,
        power=power,
        residual=residual,
        iterations=iterations,
        singular_values=singular_values,
    )


def solve_steady_by_iteration(
    plant: AugmentedPlant,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> RiccatiSolution:
    """
    Iterate the recursion from the rank-(n+1) initial condition to a fixed point.

    Args:
        plant: Augmented plant
        tol: Stopping tolerance on successive differences (relative to max(1, |Sigma|))
        max_iter: Iteration cap

    Returns:
        RiccatiSolution tagged "iteration"

    Raises:
        ConvergenceError: if max_iter is reached
        StabilizationError: if the fixed point does not stabilize the loop
    """
    tol = NUMERICS_CONFIG["riccati_tol"] if tol is None else tol
    max_iter = NUMERICS_CONFIG["riccati_max_iter"] if max_iter is None else max_iter

    sigma = initial_condition(plant.n, plant.m)
    diff = np.inf
    for iteration in range(1, max_iter + 1):
        nxt, _, _ = riccati_step(plant, sigma)
        diff = float(np.linalg.norm(nxt - sigma, np.inf))
        sigma = nxt
        if diff <= tol * max(1.0, float(np.linalg.norm(sigma, np.inf))):
            break
    else:
        raise ConvergenceError(
            f"Riccati iteration did not converge in {max_iter} steps (last difference {diff:.3e})",
            residual=diff,
        )

    logger.debug(f"Riccati iteration converged after {iteration} steps")
    return _certify(plant, sigma, "iteration", iteration)


def solve_steady_by_reduction(plant: AugmentedPlant) -> RiccatiSolution:
    """
    Block-diagonalize the plant with F phi - phi A = -G C, solve the reduced
    equation on (A, C + H phi), and rebuild
    Sigma = [[S, S phi'], [phi S, phi S phi']].
    """
    phi = solve_sylvester(plant.F, plant.A, -plant.GC)
    c_reduced = plant.C + plant.H @ phi
    s11 = stabilizing_solution(plant.A, c_reduced)

    top = np.hstack([s11, s11 @ phi.T])
    bottom = np.hstack([phi @ s11, phi @ s11 @ phi.T])
    sigma = np.vstack([top, bottom])
    sigma = 0.5 * (sigma + sigma.T)
    return _certify(plant, sigma, "reduced-order", 0)
