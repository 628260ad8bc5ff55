"""
Encoder/decoder loop, digital codebook and error predictors.

The transmitter and receiver run the same steady-state Kalman loop. In the
bounded (modified) realization the encoder carries the estimation error
x_tilde (seeded with x_tilde_0 = W) instead of the exploding state A^t W:

    u_t      = C x_tilde_t
    y_t      = H s_t + u_t + N_t
    e_t      = y_t - H s_hat_t
    x_tilde+ = A x_tilde_t - L1 e_t
    s_hat+   = F s_hat_t + L2 e_t

The receiver estimates W through the accumulator
z_(t+1) = z_t + A^(-t-1) L1 e_t, so x_hat_(0,t) = z_(t+1) never leaves a
bounded region.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd
from scipy import special, stats

from feedcap.data.channel import ChannelModel
from feedcap.exceptions import DimensionError, HorizonError, ValidationError
from feedcap.models.capacity import EncoderDesign
from feedcap.systems.riccati import initial_condition, riccati_trajectory

logger = logging.getLogger(__name__)

GAIN_SCHEDULES = ("steady", "time_varying")
_MAX_MESSAGES = 2 ** 62


@dataclass
class TransmissionTrace:
    """Signals of one transmission over T+1 channel uses."""

    u: np.ndarray
    y: np.ndarray
    e: np.ndarray
    x_hat_0: np.ndarray
    power_running_avg: np.ndarray
    peak_internal: np.ndarray
    r: Optional[np.ndarray] = None

    @property
    def length(self) -> int:
        return len(self.u)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {"t": np.arange(self.length), "u": self.u, "y": self.y, "power_avg": self.power_running_avg}
        )
        for i in range(self.x_hat_0.shape[1]):
            frame[f"x_hat_0_{i}"] = self.x_hat_0[:, i]
        return frame


@dataclass
class BatchTransmission:
    """Vectorized counterpart of TransmissionTrace with a leading trial axis."""

    u: np.ndarray
    y: np.ndarray
    e: np.ndarray
    x_hat_0: np.ndarray
    peak_internal: np.ndarray
    r: Optional[np.ndarray] = None

    def trace(self, index: int) -> TransmissionTrace:
        u = self.u[index]
        return TransmissionTrace(
            u=u,
            y=self.y[index],
            e=self.e[index],
            x_hat_0=self.x_hat_0[index],
            power_running_avg=np.cumsum(u ** 2) / np.arange(1, u.size + 1),
            peak_internal=self.peak_internal[index],
            r=None if self.r is None else self.r[index],
        )


def _gain_schedule(design: EncoderDesign, T: int, gains: str) -> List[np.ndarray]:
    if gains not in GAIN_SCHEDULES:
        raise ValidationError(f"gains must be one of {GAIN_SCHEDULES}, got {gains!r}")
    if gains == "steady":
        return [design.gain] * (T + 1)
    return riccati_trajectory(design.plant, T + 1).gains


def transmit_batch(
    design: EncoderDesign,
    W: np.ndarray,
    noise: np.ndarray,
    modified: bool = True,
    gains: str = "steady",
    channel: Optional[ChannelModel] = None,
) -> BatchTransmission:
    """
    Run the loop for a batch of messages at once.

    The encoder and decoder run on the design's channel model; the outputs
    are produced by `channel`, which defaults to that same model.

    Args:
        design: Encoder design
        W: Messages, shape (trials, n*+1)
        noise: Channel noise, shape (trials, T+1)
        modified: Bounded realization (True) or the literal A^t W encoder
        gains: "steady" or "time_varying"
        channel: Physical channel (default: design.channel)

    Returns:
        BatchTransmission with arrays of shape (trials, T+1[, k])
    """
    k, m = design.k, design.channel.order
    W = np.atleast_2d(np.asarray(W, dtype=float))
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if W.shape[1] != k:
        raise DimensionError(f"W must have {k} components, got {W.shape[1]}")
    if noise.shape[0] != W.shape[0]:
        raise DimensionError(f"noise has {noise.shape[0]} rows for {W.shape[0]} messages")
    trials, steps = noise.shape
    T = steps - 1

    A, C = design.A_star, design.C_star.ravel()
    F, G, H = design.channel.F, design.channel.G.ravel(), design.channel.H.ravel()
    physical = design.channel if channel is None else channel
    m_phys = physical.order
    F_phys, G_phys, H_phys = physical.F, physical.G.ravel(), physical.H.ravel()
    A_inv = np.linalg.inv(A)
    schedule = _gain_schedule(design, T, gains)

    x = W.copy()  # x_tilde (modified) or x = A^t W (literal)
    x_hat = np.zeros((trials, k))
    s = np.zeros((trials, m_phys))
    s_hat = np.zeros((trials, m))
    z = np.zeros((trials, k))
    back = A_inv.copy()

    u_out = np.empty((trials, steps))
    y_out = np.empty((trials, steps))
    e_out = np.empty((trials, steps))
    x0_out = np.empty((trials, steps, k))
    peak = np.empty((trials, steps))
    r_out = None if modified else np.empty((trials, steps))

    for t in range(steps):
        gain = schedule[t]
        L1, L2 = gain[:k], gain[k:]
        if modified:
            u = x @ C
        else:
            r_out[:, t] = x @ C
            u = (x - x_hat) @ C
        y = (s @ H_phys if m_phys else 0.0) + u + noise[:, t]
        e = y - (s_hat @ H if m else 0.0)

        s = s @ F_phys.T + np.outer(u, G_phys)
        s_hat = s_hat @ F.T + np.outer(e, L2)
        if modified:
            x = x @ A.T - np.outer(e, L1)
            internal = [np.abs(x), np.abs(s), np.abs(s_hat)]
        else:
            x = x @ A.T
            x_hat = x_hat @ A.T + np.outer(e, L1)
            internal = [np.abs(x), np.abs(x_hat), np.abs(s), np.abs(s_hat)]
        z = z + np.outer(e, back @ L1)
        back = A_inv @ back

        u_out[:, t], y_out[:, t], e_out[:, t] = u, y, e
        x0_out[:, t, :] = z
        peak[:, t] = np.max(np.hstack([np.abs(u)[:, None], np.abs(y)[:, None]] + internal), axis=1)

    return BatchTransmission(u=u_out, y=y_out, e=e_out, x_hat_0=x0_out, peak_internal=peak, r=r_out)


def run_transmission(
    design: EncoderDesign,
    channel: ChannelModel,
    W: Sequence[float],
    T: int,
    noise: Sequence[float],
    modified: bool = True,
    gains: str = "steady",
) -> TransmissionTrace:
    """
    Transmit one message over T+1 channel uses.

    Args:
        design: Encoder design
        channel: Physical channel; the decoder keeps using design.channel
        W: Message point of length n*+1
        T: Horizon; T+1 channel uses
        noise: Noise samples, at least T+1 of them
        modified: Use the bounded realization
        gains: "steady" (default) or "time_varying"

    Returns:
        TransmissionTrace
    """
    noise = np.asarray(noise, dtype=float).ravel()
    if T < 0 or noise.size < T + 1:
        raise DimensionError(f"Need at least T+1 = {T + 1} noise samples, got {noise.size}")
    batch = transmit_batch(design, np.asarray(W, dtype=float)[None, :], noise[None, : T + 1], modified, gains, channel)
    return batch.trace(0)


def _inverse_power(A: np.ndarray, power: int) -> np.ndarray:
    return np.linalg.matrix_power(np.linalg.inv(A), power)


def _estimate_covariance(design: EncoderDesign, T: int, sigma_x: np.ndarray) -> np.ndarray:
    back = _inverse_power(design.A_star, T + 1)
    cov = back @ sigma_x @ back.T
    return 0.5 * (cov + cov.T)


@dataclass(eq=False)
class Codebook:
    """Hypercube partition aligned with the eigenbasis of the estimation error."""

    T: int
    epsilon: float
    eig_basis: np.ndarray
    sigmas: np.ndarray
    segments_per_side: np.ndarray
    design: Optional[EncoderDesign] = field(default=None, repr=False)

    @property
    def M_T(self) -> int:
        return int(np.prod([int(s) for s in self.segments_per_side]))

    @property
    def rate_actual(self) -> float:
        return float(np.sum(np.log2(self.segments_per_side)) / (self.T + 1))

    @property
    def cell_widths(self) -> np.ndarray:
        return 1.0 / self.segments_per_side

    def summary(self) -> Dict[str, Any]:
        summary = {
            "T": self.T,
            "epsilon": self.epsilon,
            "M_T": self.M_T,
            "rate_actual": self.rate_actual,
            "sigmas": self.sigmas.tolist(),
            "segments_per_side": self.segments_per_side.tolist(),
        }
        if self.design is not None:
            summary["rate_margin"] = (1 - self.epsilon) * self.design.rate - self.rate_actual
        return summary


def build_codebook(design: EncoderDesign, T: int, epsilon: float) -> Codebook:
    """
    Partition the unit hypercube into M_T cells for horizon T.

    Args:
        design: Encoder design
        T: Horizon (coding length T+1)
        epsilon: Rate back-off in (0, 1)

    Returns:
        Codebook

    Raises:
        HorizonError: if a mode has sigma_(T,i) >= 1
    """
    if not 0 < epsilon < 1:
        raise ValidationError(f"Epsilon must be between 0 and 1, got {epsilon}")
    if T < 0:
        raise ValidationError(f"Horizon must be nonnegative, got {T}")

    cov = _estimate_covariance(design, T, design.sigma_x_star)
    evals, basis = np.linalg.eigh(cov)
    # deterministic orientation: largest-magnitude component positive
    pivots = basis[np.argmax(np.abs(basis), axis=0), np.arange(basis.shape[1])]
    basis = basis * np.where(pivots < 0, -1.0, 1.0)
    sigmas = np.sqrt(np.maximum(evals, 0.0))

    too_wide = np.flatnonzero(sigmas >= 1.0)
    if too_wide.size:
        i = int(too_wide[0])
        raise HorizonError(
            f"Mode {i} has sigma = {sigmas[i]:.4g} >= 1 at T = {T}; increase T or epsilon"
        )
    segments = np.maximum(1, np.floor(sigmas ** -(1.0 - epsilon))).astype(np.int64)
    if np.prod(segments.astype(float)) >= _MAX_MESSAGES:
        raise ValidationError(f"Codebook with {np.prod(segments.astype(float)):.3g} messages exceeds index range")

    book = Codebook(T=T, epsilon=epsilon, eig_basis=basis, sigmas=sigmas, segments_per_side=segments, design=design)
    logger.debug(f"Codebook T={T}: M_T = {book.M_T}, rate {book.rate_actual:.4f} bits")
    return book


def _centers(book: Codebook, multi_index: np.ndarray) -> np.ndarray:
    return -0.5 + (multi_index + 0.5) / book.segments_per_side


def encode_messages(book: Codebook, indices: Union[Sequence[int], np.ndarray]) -> np.ndarray:
    """Vectorized encode_message; returns an array of shape (len(indices), k)."""
    indices = np.asarray(indices, dtype=np.int64)
    if np.any(indices < 0) or np.any(indices >= book.M_T):
        raise ValidationError(f"Message index out of range [0, {book.M_T})")
    multi = np.stack(np.unravel_index(indices, tuple(book.segments_per_side)), axis=-1)
    return _centers(book, multi) @ book.eig_basis.T


def encode_message(book: Codebook, index: int) -> np.ndarray:
    """Center of the cell with the given row-major mixed-radix index."""
    return encode_messages(book, [index])[0]


def decode_messages(book: Codebook, estimates: np.ndarray) -> np.ndarray:
    """Vectorized decode_message over rows of estimates."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    alpha = estimates @ book.eig_basis
    multi = np.ceil((alpha + 0.5) * book.segments_per_side) - 1
    multi = np.clip(multi, 0, book.segments_per_side - 1).astype(np.int64)
    return np.ravel_multi_index(tuple(multi.T), tuple(book.segments_per_side))


def decode_message(book: Codebook, x_hat_0T: Sequence[float]) -> int:
    """
    Index of the nearest cell center.

    Coordinates outside the hypercube are clamped to the boundary cell and
    points on a cell boundary go to the lower index.
    """
    x_hat_0T = np.asarray(x_hat_0T, dtype=float).ravel()
    if x_hat_0T.size != book.eig_basis.shape[0]:
        raise DimensionError(f"Estimate must have {book.eig_basis.shape[0]} components")
    return int(decode_messages(book, x_hat_0T[None, :])[0])


def _finite_horizon_sigmas(design: EncoderDesign, T: int) -> np.ndarray:
    trajectory = riccati_trajectory(design.plant, T + 1)
    cov = _estimate_covariance(design, T, trajectory.sigma_x(T + 1, design.k))
    return np.sqrt(np.maximum(np.linalg.eigvalsh(cov), 0.0))


def theoretical_pe(design: EncoderDesign, T: int, epsilon: float) -> float:
    """
    Predicted error probability 1 - prod_i (1 - 2 Q(sigma_(T,i)^(-epsilon) / 2)).

    The sigmas come from the finite-horizon covariance Sigma_(x,T+1).
    """
    sigmas = _finite_horizon_sigmas(design, T)
    with np.errstate(divide="ignore"):
        tails = stats.norm.sf(sigmas ** -epsilon / 2.0)
    return float(np.clip(-np.expm1(np.sum(np.log1p(-2.0 * tails))), 0.0, 1.0))


def theoretical_log_pe(design: EncoderDesign, T: int, epsilon: float) -> float:
    """Natural log of theoretical_pe, accurate after the value underflows."""
    sigmas = _finite_horizon_sigmas(design, T)
    with np.errstate(divide="ignore"):
        log_tails = stats.norm.logsf(sigmas ** -epsilon / 2.0)
    pe = -np.expm1(np.sum(np.log1p(-2.0 * np.exp(log_tails))))
    if pe > 1e-12:
        return float(np.log(pe))
    return float(special.logsumexp(np.log(2.0) + log_tails))


def fit_double_exponential(horizons: Sequence[int], log_pe: Sequence[float]) -> Dict[str, float]:
    """
    Linear fit of log(-log PE_T) against T over the decaying region.

    The decaying region is the longest tail of the (sorted) horizons on which
    log PE is strictly decreasing.

    Returns:
        Dictionary with slope, intercept, r_squared and the first fitted horizon

    Raises:
        ValidationError: if fewer than three horizons lie in the decaying region
    """
    horizons = np.asarray(horizons, dtype=float)
    log_pe = np.asarray(log_pe, dtype=float)
    order = np.argsort(horizons)
    horizons, log_pe = horizons[order], log_pe[order]

    start = log_pe.size - 1
    while start > 0 and log_pe[start] < log_pe[start - 1]:
        start -= 1
    keep = np.arange(log_pe.size) >= start
    keep &= log_pe < 0
    if keep.sum() < 3:
        raise ValidationError(f"Need at least three horizons where PE decays, got {int(keep.sum())}")
    fit = stats.linregress(horizons[keep], np.log(-log_pe[keep]))
    return {
        "slope": float(fit.slope),
        "intercept": float(fit.intercept),
        "r_squared": float(fit.rvalue ** 2),
        "start": int(horizons[keep][0]),
    }


def loop_error_covariance(design: EncoderDesign, T: int, gains: str = "steady") -> List[np.ndarray]:
    """
    Exact covariance of the loop error for a gain schedule.

    P_0 = blockdiag(I, 0) and P_(t+1) = (AA - L_t CC) P_t (AA - L_t CC)' + L_t L_t'.
    With the time-varying schedule this reproduces the Riccati trajectory.

    Returns:
        List P_0 .. P_(T+1)
    """
    plant = design.plant
    schedule = _gain_schedule(design, T, gains)
    P = initial_condition(plant.n, plant.m)
    history = [P]
    for gain in schedule:
        closed = plant.A_bb - np.outer(gain, plant.C_bb.ravel())
        P = closed @ P @ closed.T + np.outer(gain, gain)
        P = 0.5 * (P + P.T)
        history.append(P)
    return history


def analog_mse_trajectory(design: EncoderDesign, T: int, gains: str = "time_varying") -> List[np.ndarray]:
    """MSE(x_hat_(0,t)) = A^(-t-1) Sigma_(x,t+1) A'^(-t-1) for t = 0..T."""
    if T < 0:
        raise ValidationError(f"Horizon must be nonnegative, got {T}")
    k = design.k
    if gains == "time_varying":
        sigmas = riccati_trajectory(design.plant, T + 1).sigmas
    else:
        sigmas = loop_error_covariance(design, T, gains)
    A_inv = np.linalg.inv(design.A_star)
    back = A_inv.copy()
    out = []
    for t in range(T + 1):
        mse = back @ sigmas[t + 1][:k, :k] @ back.T
        out.append(0.5 * (mse + mse.T))
        back = A_inv @ back
    return out


def analog_mse(design: EncoderDesign, T: int, gains: str = "time_varying") -> np.ndarray:
    """End-to-end distortion of the estimate of W after T+1 channel uses."""
    return analog_mse_trajectory(design, T, gains)[-1]


def distortion_rate(design: EncoderDesign, T: int) -> float:
    """-log2 det MSE(x_hat_(0,T)) / (2 (T+1)), which tends to the design rate."""
    sign, logdet = np.linalg.slogdet(analog_mse(design, T))
    if sign <= 0:
        return float("inf")
    return float(-logdet / np.log(2.0) / (2 * (T + 1)))
