"""
Dense finite-horizon oracles for the general coding structure.

With the message W ~ N(0, I), the encoder output r = Gamma W (rows C A^t)
and a strictly causal feedback generator G_T, the channel output is

    y = (I - Z^-1 G)^-1 (X W + N),    X = Z^-1 Gamma.

Everything here is computed with explicit (T+1)-square matrices so it can
serve as ground truth for the Riccati and simulation code paths: the five
expressions of the information I(W; y), the MMSE/Fisher/CRB triple, the
input power identity, the optimal feedback generator and the conversions
to and from the u = B Z_noise + v (Cover-Pombra) parametrization.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple
import logging

import numpy as np
from scipy import linalg

from feedcap.data.channel import ChannelModel, augment, validate
from feedcap.exceptions import (
    DimensionError,
    EigenvalueCollisionError,
    NonMinimalRealizationError,
    NonMinimumPhaseError,
    SingularEquationError,
    UnitCircleError,
    UnstableChannelError,
    ValidationError,
)
from feedcap.systems.riccati import AugmentedPlant, riccati_trajectory
from feedcap.systems.statespace import is_observable

logger = logging.getLogger(__name__)

MAX_DENSE_HORIZON = 256
_RANK_TOL = 1e-10
_LN2 = np.log(2.0)


@dataclass(eq=False)
class GeneralCodingConfig:
    """Encoder (A, C) over a channel at horizon T."""

    A: np.ndarray
    C: np.ndarray
    T: int
    channel: ChannelModel

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        k = self.A.shape[0]
        self.C = np.asarray(self.C, dtype=float).reshape(1, k)
        if not 0 <= self.T <= MAX_DENSE_HORIZON:
            raise ValidationError(f"Horizon must be in [0, {MAX_DENSE_HORIZON}], got {self.T}")
        if not is_observable(self.A, self.C):
            raise ValidationError("(A, C) must be observable")
        # raises on unit-circle eigenvalues or collisions with the channel
        self._plant = augment(self.channel, self.A, self.C)

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def size(self) -> int:
        return self.T + 1

    @property
    def plant(self) -> AugmentedPlant:
        return self._plant

    @property
    def gamma(self) -> np.ndarray:
        """Gamma with rows C A^t, t = 0..T."""
        rows = np.empty((self.size, self.k))
        row = self.C[0].copy()
        for t in range(self.size):
            rows[t] = row
            row = row @ self.A
        return rows

    @property
    def z_inv(self) -> np.ndarray:
        return self.channel.toeplitz(self.T).matrix()

    @property
    def z(self) -> np.ndarray:
        return self.channel.noise_toeplitz(self.T).matrix()

    @property
    def X(self) -> np.ndarray:
        return self.z_inv @ self.gamma


@dataclass
class FiniteHorizonReport:
    """Information, estimation and power quantities of one configuration."""

    mutual_info_bits: float
    rate: float
    mmse_W: np.ndarray
    fisher_W: np.ndarray
    crb_W: np.ndarray
    input_power: float
    ke_sequence: np.ndarray
    input_power_riccati: float = 0.0
    mutual_info_paths: Dict[str, float] = field(default_factory=dict)

    def max_path_spread(self) -> float:
        values = np.array(list(self.mutual_info_paths.values()))
        return float(values.max() - values.min()) if values.size else 0.0


def _check_strictly_lower(matrix: np.ndarray, size: int, name: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (size, size):
        raise DimensionError(f"{name} must be {size} x {size}, got {matrix.shape}")
    if np.any(np.triu(matrix) != 0.0):
        raise ValidationError(f"{name} must be strictly lower triangular")
    return matrix


def _logdet(matrix: np.ndarray) -> float:
    sign, value = np.linalg.slogdet(matrix)
    if sign <= 0:
        raise SingularEquationError("Matrix is not positive definite")
    return float(value)


def mutual_info_matrix_form(cfg: GeneralCodingConfig) -> float:
    """
    I(W; y^T) = 1/2 log2 det(I + X X') in bits, via the QR factor of [X; I].

    The R factor satisfies R'R = I + X'X, whose determinant equals that of
    I + X X'.
    """
    stacked = np.vstack([cfg.X, np.eye(cfg.k)])
    r = np.linalg.qr(stacked, mode="r")
    return float(np.sum(np.log2(np.abs(np.diag(r)))))


def mutual_info_explicit(cfg: GeneralCodingConfig, feedback: Optional[np.ndarray] = None) -> float:
    """
    1/2 log2 det K_y - 1/2 log2 det K_(y|W) with K_y = M (X X' + I) M'
    and M = (I - Z^-1 G)^-1 for a strictly causal feedback generator G.
    """
    size = cfg.size
    feedback = np.zeros((size, size)) if feedback is None else _check_strictly_lower(feedback, size, "G")
    M = linalg.solve_triangular(np.eye(size) - cfg.z_inv @ feedback, np.eye(size), lower=True)
    X = cfg.X
    k_y = M @ (X @ X.T + np.eye(size)) @ M.T
    k_noise = M @ M.T
    return 0.5 * (_logdet(k_y) - _logdet(k_noise)) / _LN2


def mutual_info_riccati(cfg: GeneralCodingConfig) -> float:
    """1/2 sum_t log2 K_(e,t) along the Riccati trajectory."""
    trajectory = riccati_trajectory(cfg.plant, cfg.T)
    return float(0.5 * np.sum(np.log2(trajectory.ke)))


def fisher_information(cfg: GeneralCodingConfig) -> np.ndarray:
    """Bayesian Fisher information I + X'X of W."""
    X = cfg.X
    return np.eye(cfg.k) + X.T @ X


def mmse_matrix(cfg: GeneralCodingConfig, rows: Optional[int] = None) -> np.ndarray:
    """
    Error covariance of W given the first ``rows`` observations, by Gaussian
    conditioning: I - X' (I + X X')^-1 X.
    """
    X = cfg.X if rows is None else cfg.X[:rows]
    if X.shape[0] == 0:
        return np.eye(cfg.k)
    gram = np.eye(X.shape[0]) + X @ X.T
    mmse = np.eye(cfg.k) - X.T @ np.linalg.solve(gram, X)
    return 0.5 * (mmse + mmse.T)


def input_power_mmse(cfg: GeneralCodingConfig) -> float:
    """(1/(T+1)) sum_t C A^t MMSE_(W,t) A^t' C' with MMSE_(W,0) = I."""
    gamma = cfg.gamma
    total = sum(float(gamma[t] @ mmse_matrix(cfg, t) @ gamma[t]) for t in range(cfg.size))
    return total / cfg.size


def input_power_riccati(cfg: GeneralCodingConfig) -> float:
    """(1/(T+1)) sum_t DD Sigma_t DD' along the Riccati trajectory."""
    trajectory = riccati_trajectory(cfg.plant, cfg.T)
    D = cfg.plant.D_bb
    return float(np.mean([D @ sigma @ D.T for sigma in trajectory.sigmas[: cfg.size]]))


def mmse_fisher_crb(cfg: GeneralCodingConfig) -> FiniteHorizonReport:
    """
    Compute the information and estimation quantities of a configuration.

    Returns:
        FiniteHorizonReport with the five information paths recorded
    """
    fisher = fisher_information(cfg)
    mmse = mmse_matrix(cfg)
    crb = np.linalg.inv(fisher)
    trajectory = riccati_trajectory(cfg.plant, cfg.T)

    paths = {
        "matrix_form": mutual_info_matrix_form(cfg),
        "explicit_ky": mutual_info_explicit(cfg),
        "riccati_ke": float(0.5 * np.sum(np.log2(trajectory.ke))),
        "fisher": 0.5 * _logdet(fisher) / _LN2,
        "mmse": -0.5 * _logdet(mmse) / _LN2,
        "crb": -0.5 * _logdet(crb) / _LN2,
    }
    info = paths["matrix_form"]
    report = FiniteHorizonReport(
        mutual_info_bits=info,
        rate=info / cfg.size,
        mmse_W=mmse,
        fisher_W=fisher,
        crb_W=crb,
        input_power=input_power_mmse(cfg),
        ke_sequence=trajectory.ke,
        input_power_riccati=input_power_riccati(cfg),
        mutual_info_paths=paths,
    )
    logger.debug(f"T={cfg.T}: I = {info:.6f} bits, path spread {report.max_path_spread():.2e}")
    return report


def optimal_feedback_generator(cfg: GeneralCodingConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optimal feedback generator from the time-varying Kalman filter.

    The filter state is linear in the equivalent outputs, X_hat_t = Xi_t y_bar,
    with Xi_(t+1) = (AA - L_t CC) Xi_t + L_t e_t'. Row t of the estimator
    G_hat is DD Xi_t, and G* = -G_hat (I - Z^-1 G_hat)^-1.

    Returns:
        Tuple of (G*, G_hat), both strictly lower triangular
    """
    plant = cfg.plant
    size = cfg.size
    trajectory = riccati_trajectory(plant, cfg.T)
    xi = np.zeros((plant.dim, size))
    g_hat = np.zeros((size, size))
    for t in range(size):
        g_hat[t] = plant.D_bb @ xi
        if t < cfg.T:
            gain = trajectory.gains[t]
            xi = (plant.A_bb - np.outer(gain, plant.C_bb.ravel())) @ xi
            xi[:, t] += gain
    inner = np.eye(size) - cfg.z_inv @ g_hat
    g_star = -linalg.solve_triangular(inner.T, g_hat.T, lower=False).T
    return np.tril(g_star, -1), g_hat


def normal_equations_feedback(cfg: GeneralCodingConfig) -> np.ndarray:
    """
    Strictly causal linear MMSE predictor of r from y_bar, row by row:
    g_t = K_(r y)[t, :t] K_(y y)[:t, :t]^-1.
    """
    X = cfg.X
    k_yy = X @ X.T + np.eye(cfg.size)
    k_ry = cfg.gamma @ X.T
    g_hat = np.zeros((cfg.size, cfg.size))
    for t in range(1, cfg.size):
        g_hat[t, :t] = np.linalg.solve(k_yy[:t, :t], k_ry[t, :t])
    return g_hat


def input_covariance(cfg: GeneralCodingConfig, feedback: Optional[np.ndarray] = None) -> np.ndarray:
    """
    K_u for u = Gamma W + G y: M_r M_r' + M_N M_N' with
    M_N = G (I - Z^-1 G)^-1 and M_r = Gamma + M_N Z^-1 Gamma.
    """
    size = cfg.size
    feedback = np.zeros((size, size)) if feedback is None else _check_strictly_lower(feedback, size, "G")
    z_inv = cfg.z_inv
    resolvent = linalg.solve_triangular(np.eye(size) - z_inv @ feedback, np.eye(size), lower=True)
    m_noise = feedback @ resolvent
    m_message = cfg.gamma + m_noise @ z_inv @ cfg.gamma
    k_u = m_message @ m_message.T + m_noise @ m_noise.T
    return 0.5 * (k_u + k_u.T)


def estimator_input_covariance(cfg: GeneralCodingConfig, g_hat: np.ndarray) -> np.ndarray:
    """K_u for u = r - G_hat y_bar: (Gamma - G_hat X)(.)' + G_hat G_hat'."""
    g_hat = _check_strictly_lower(g_hat, cfg.size, "G_hat")
    message = cfg.gamma - g_hat @ cfg.X
    k_u = message @ message.T + g_hat @ g_hat.T
    return 0.5 * (k_u + k_u.T)


def input_power_with_feedback(cfg: GeneralCodingConfig, feedback: Optional[np.ndarray] = None) -> float:
    """Average input power tr(K_u) / (T+1)."""
    return float(np.trace(input_covariance(cfg, feedback)) / cfg.size)


def cp_convert(cfg: GeneralCodingConfig, feedback: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Map (A, C, G) to the (K_r, B) parametrization u = (I + B) r + B Z N.

    Returns:
        Tuple of (K_r = Gamma Gamma', B = G Z^-1 (I - G Z^-1)^-1)
    """
    size = cfg.size
    feedback = _check_strictly_lower(feedback, size, "G")
    gz = feedback @ cfg.z_inv
    b = gz @ np.linalg.inv(np.eye(size) - gz)
    gamma = cfg.gamma
    return gamma @ gamma.T, np.tril(b, -1)


def cp_input_covariance(k_r: np.ndarray, b: np.ndarray, channel: ChannelModel) -> np.ndarray:
    """K_u = B Z Z' B' + (I + B) K_r (I + B)'."""
    size = k_r.shape[0]
    z = channel.noise_toeplitz(size - 1).matrix()
    shaped = b @ z
    lifted = np.eye(size) + b
    k_u = shaped @ shaped.T + lifted @ k_r @ lifted.T
    return 0.5 * (k_u + k_u.T)


def cp_mutual_info(k_r: np.ndarray, channel: ChannelModel) -> float:
    """1/2 [log2 det(Z Z' + K_r) - log2 det(Z Z')] in bits."""
    size = k_r.shape[0]
    z = channel.noise_toeplitz(size - 1).matrix()
    zz = z @ z.T
    return 0.5 * (_logdet(zz + k_r) - _logdet(zz)) / _LN2


def cp_convert_back(
    k_r: np.ndarray,
    b: np.ndarray,
    T: int,
    channel: ChannelModel,
    regularization: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Recover an (A, C, G) triple generating the same channel input as (K_r, B).

    A full-rank K_r is factored as Gamma_0 = K_r^(1/2) and realized with the
    shift S (last row [2, 0, ...]) as A = Gamma_0^-1 S Gamma_0,
    C = e_0' Gamma_0. A rank-deficient K_r is factored on its range and A is
    read off the shift invariance Gamma_0[1:] = Gamma_0[:-1] A.
    G = (I + B)^-1 B Z in both cases.

    Raises:
        SingularEquationError: if the low-rank factor is not shift invariant
    """
    size = T + 1
    k_r = np.asarray(k_r, dtype=float)
    if k_r.shape != (size, size):
        raise DimensionError(f"K_r must be {size} x {size}, got {k_r.shape}")
    b = _check_strictly_lower(b, size, "B")
    k_r = 0.5 * (k_r + k_r.T) + regularization * np.eye(size)

    evals, evecs = np.linalg.eigh(k_r)
    if evals[0] < -_RANK_TOL * max(evals[-1], 1.0):
        raise ValidationError("K_r must be positive semidefinite")
    keep = evals > _RANK_TOL * max(evals[-1], 1.0)

    if keep.all():
        gamma0 = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
        shift = np.eye(size, k=1)
        shift[-1, 0] = 2.0
        A = np.linalg.solve(gamma0, shift @ gamma0)
        C = gamma0[:1].copy()
    else:
        gamma0 = evecs[:, keep] * np.sqrt(evals[keep])
        A, *_ = np.linalg.lstsq(gamma0[:-1], gamma0[1:], rcond=None)
        residual = np.linalg.norm(gamma0[:-1] @ A - gamma0[1:]) / max(np.linalg.norm(gamma0), 1.0)
        if residual > 1e-8:
            raise SingularEquationError(f"K_r has no shift-invariant factor (residual {residual:.2e})")
        C = gamma0[:1].copy()

    z = channel.noise_toeplitz(T).matrix()
    feedback = np.linalg.solve(np.eye(size) + b, b @ z)
    return A, C, np.tril(feedback, -1)


def innovation_cross_covariance(cfg: GeneralCodingConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Analytic E[e e'] and E[u e'] of the optimal loop.

    c_(t,tau) = E[X_tilde_t e_tau] starts at AA Sigma_tau CC' - L_tau K_(e,tau)
    (zero up to roundoff) and propagates with (AA - L_t CC).

    Returns:
        Tuple of (K_e, K_ue), both (T+1)-square; entry [t, tau] is E[. e_tau]
    """
    plant = cfg.plant
    size = cfg.size
    trajectory = riccati_trajectory(plant, cfg.T)
    k_e = np.diag(trajectory.ke.copy())
    k_ue = np.zeros((size, size))
    for tau in range(size):
        k_ue[tau, tau] = float(plant.D_bb @ trajectory.sigmas[tau] @ plant.C_bb.T)
        if tau == cfg.T:
            break
        sigma, gain, ke = trajectory.sigmas[tau], trajectory.gains[tau], trajectory.ke[tau]
        cross = (plant.A_bb @ sigma @ plant.C_bb.T).ravel() - gain * ke
        for t in range(tau + 1, size):
            k_e[t, tau] = float(plant.C_bb @ cross)
            k_ue[t, tau] = float(plant.D_bb @ cross)
            if t < cfg.T:
                cross = (plant.A_bb - np.outer(trajectory.gains[t], plant.C_bb.ravel())) @ cross
    return k_e, k_ue


def _sample_eigenvalues(
    rng: np.random.Generator,
    count: int,
    unstable_band: Tuple[float, float],
    stable_band: Tuple[float, float],
    stable_probability: float,
) -> np.ndarray:
    eigs = []
    while len(eigs) < count:
        band = stable_band if rng.random() < stable_probability else unstable_band
        magnitude = float(np.exp(rng.uniform(np.log(band[0]), np.log(band[1]))))
        if count - len(eigs) >= 2 and rng.random() < 0.5:
            angle = rng.uniform(0.1, np.pi - 0.1)
            eigs += [magnitude * np.exp(1j * angle), magnitude * np.exp(-1j * angle)]
        else:
            eigs.append(magnitude * rng.choice([-1.0, 1.0]))
    return np.array(eigs)


def _real_block_matrix(eigs: np.ndarray) -> np.ndarray:
    k = len(eigs)
    D = np.zeros((k, k))
    i = 0
    while i < k:
        lam = eigs[i]
        if abs(lam.imag) > 0:
            D[i:i + 2, i:i + 2] = [[lam.real, lam.imag], [-lam.imag, lam.real]]
            i += 2
        else:
            D[i, i] = lam.real
            i += 1
    return D


def random_channel(
    rng: np.random.Generator,
    m: int,
    band: Tuple[float, float] = (0.1, 0.8),
    max_attempts: int = 100,
) -> ChannelModel:
    """Random stable minimum-phase channel of order m with real poles and zeros."""
    if m == 0:
        return validate({"kind": "statespace", "name": "awgn", "F": [], "G": [], "H": [], "D": 1.0})
    for _ in range(max_attempts):
        poles = rng.uniform(*band, size=m) * rng.choice([-1.0, 1.0], size=m)
        zeros = rng.uniform(*band, size=m) * rng.choice([-1.0, 1.0], size=m)
        if np.min(np.abs(poles[:, None] - zeros[None, :])) < 0.05:
            continue
        try:
            return validate(
                {"name": f"random-{m}", "kind": "rational", "num": np.poly(zeros).tolist(), "den": np.poly(poles).tolist()}
            )
        except (NonMinimalRealizationError, UnstableChannelError, NonMinimumPhaseError):
            continue
    raise ValidationError(f"Could not draw a valid channel of order {m}")


def random_config(
    rng: np.random.Generator,
    n: int,
    channel: ChannelModel,
    T: int,
    unstable_band: Tuple[float, float] = (1.1, 3.0),
    stable_band: Tuple[float, float] = (0.2, 0.9),
    stable_probability: float = 0.3,
    max_attempts: int = 200,
) -> GeneralCodingConfig:
    """
    Draw an encoder with eigenvalue magnitudes log-uniform in the given bands.

    Candidates violating observability, touching the unit circle or colliding
    with the channel poles are rejected and redrawn.
    """
    k = n + 1
    for attempt in range(max_attempts):
        eigs = _sample_eigenvalues(rng, k, unstable_band, stable_band, stable_probability)
        similarity = rng.standard_normal((k, k))
        if abs(np.linalg.det(similarity)) < 1e-2:
            continue
        A = similarity @ _real_block_matrix(eigs) @ np.linalg.inv(similarity)
        C = rng.standard_normal((1, k))
        try:
            return GeneralCodingConfig(A=A, C=C, T=T, channel=channel)
        except (ValidationError, EigenvalueCollisionError, UnitCircleError):
            logger.debug(f"Rejected random configuration (attempt {attempt + 1})")
            continue
    raise ValidationError(f"Could not draw a valid configuration in {max_attempts} attempts")


def first_order_channel(pole: float, zero: float) -> ChannelModel:
    """Z^-1 = (1 - zero z^-1) / (1 - pole z^-1)."""
    return validate({"kind": "rational", "name": "first-order", "num": [1.0, -zero], "den": [1.0, -pole]})
