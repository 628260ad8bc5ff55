"""
Channel definition for ISI Gaussian channels with feedback.

The channel filter Z^-1 has a minimal realization (F, G, H, 1):

    s[t+1] = F s[t] + G u[t]
    y[t]   = H s[t] + u[t] + N[t]

F stable makes Z minimum phase and F - GH stable makes Z stable. Channel
files are JSON, either {"kind": "rational", "num": [...], "den": [...]}
with coefficients in powers of z^-1, or {"kind": "statespace", "F": ...,
"G": ..., "H": ..., "D": ...}.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Union
import logging

import numpy as np
from scipy import signal

from feedcap.config import CHANNELS_DIR, NUMERICS_CONFIG
from feedcap.exceptions import (
    DegenerateChannelError,
    DimensionError,
    EigenvalueCollisionError,
    NonMinimalRealizationError,
    NonMinimumPhaseError,
    SingularityError,
    UnitCircleError,
    UnstableChannelError,
    ValidationError,
)
from feedcap.systems.riccati import AugmentedPlant
from feedcap.systems.statespace import (
    StateSpaceSystem,
    ToeplitzOperator,
    eigen_spectrum,
    evaluate_transfer,
    frequency_response,
    is_controllable,
    is_observable,
    toeplitz_of,
)
from feedcap.utils import export_to_json, load_from_json

logger = logging.getLogger(__name__)

ChannelSpec = Union["ChannelModel", StateSpaceSystem, Dict[str, Any]]


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Validated channel; ``inv_z`` is the realization (F, G, H, 1) of Z^-1."""

    inv_z: StateSpaceSystem
    gain: float = 1.0
    gain_normalized: bool = False
    name: str = ""

    @property
    def order(self) -> int:
        return self.inv_z.state_dim

    @property
    def m(self) -> int:
        return self.order

    @property
    def F(self) -> np.ndarray:
        return self.inv_z.A

    @property
    def G(self) -> np.ndarray:
        return self.inv_z.B

    @property
    def H(self) -> np.ndarray:
        return self.inv_z.C

    @property
    def noise_filter(self) -> StateSpaceSystem:
        """Realization of Z = (F - GH, G, -H, 1)."""
        return StateSpaceSystem(A=self.F - self.G @ self.H, B=self.G, C=-self.H, D=[[1.0]])

    def toeplitz(self, T: int) -> ToeplitzOperator:
        """Z_T^-1, the finite-horizon operator of the channel filter."""
        return toeplitz_of(self.inv_z, T)

    def noise_toeplitz(self, T: int) -> ToeplitzOperator:
        """Z_T, the finite-horizon noise-shaping operator."""
        return toeplitz_of(self.noise_filter, T)

    def inverse_response(self, z):
        """Z^-1 evaluated at complex points."""
        return evaluate_transfer(self.inv_z, z)

    def response(self, z):
        """Z(z) = 1 / Z^-1(z)."""
        return evaluate_transfer(self.noise_filter, z)

    def noise_spectrum(self, theta) -> np.ndarray:
        """|Z(exp(j 2 pi theta))|^2."""
        return np.abs(frequency_response(self.noise_filter, theta)) ** 2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "statespace",
            "name": self.name,
            "F": self.F.tolist(),
            "G": self.G.ravel().tolist(),
            "H": self.H.ravel().tolist(),
            "D": 1.0,
            "gain": self.gain,
        }


def realize_rational(
    num: Sequence[float],
    den: Sequence[float],
    form: str = "controller",
) -> StateSpaceSystem:
    """
    Realize num(z^-1)/den(z^-1) in companion form.

    Args:
        num: Numerator coefficients b0, b1, ... of powers of z^-1
        den: Denominator coefficients a0, a1, ... of powers of z^-1
        form: "controller" (the tf2ss layout) or "observable" (its transpose)

    Returns:
        SISO StateSpaceSystem
    """
    num = np.asarray(num, dtype=float).ravel()
    den = np.asarray(den, dtype=float).ravel()
    if den.size == 0 or den[0] == 0.0:
        raise ValidationError("Leading denominator coefficient must be nonzero")
    if num.size == 0:
        raise ValidationError("Numerator must have at least one coefficient")

    length = max(num.size, den.size)
    num = np.pad(num, (0, length - num.size))
    den = np.pad(den, (0, length - den.size))
    while length > 1 and num[-1] == 0.0 and den[-1] == 0.0:
        num, den, length = num[:-1], den[:-1], length - 1

    if length == 1:
        return StateSpaceSystem.static_gain(num[0] / den[0])

    # multiplying through by z^(length-1) turns z^-1 coefficients into descending powers of z
    A, B, C, D = signal.tf2ss(num, den)
    if form == "observable":
        A, B, C = A.T, C.T, B.T
    elif form != "controller":
        raise ValidationError(f"Unknown realization form {form!r}")
    return StateSpaceSystem(A=A, B=B, C=C, D=D)


def _realization_from_spec(spec: ChannelSpec) -> Tuple[StateSpaceSystem, str]:
    if isinstance(spec, ChannelModel):
        return spec.inv_z, spec.name
    if isinstance(spec, StateSpaceSystem):
        return spec, ""
    if not isinstance(spec, dict):
        raise ValidationError(f"Unsupported channel specification of type {type(spec).__name__}")

    kind = spec.get("kind", "statespace")
    name = spec.get("name", "")
    if kind == "rational":
        return realize_rational(spec["num"], spec["den"], spec.get("form", "controller")), name
    if kind == "statespace":
        F = np.asarray(spec.get("F", []), dtype=float)
        m = int(round(np.sqrt(F.size)))
        return StateSpaceSystem(
            A=F.reshape(m, m),
            B=np.asarray(spec.get("G", []), dtype=float).reshape(m, 1),
            C=np.asarray(spec.get("H", []), dtype=float).reshape(1, m),
            D=[[float(spec.get("D", 1.0))]],
        ), name
    raise ValidationError(f"Unknown channel kind {kind!r}")


def _check_realization(sys: StateSpaceSystem) -> None:
    if not sys.is_siso:
        raise DimensionError("Channel must be single-input single-output")
    if sys.state_dim == 0:
        return

    poles = eigen_spectrum(sys.A)
    if poles.unstable_count or poles.unit_circle_count:
        raise UnstableChannelError(
            f"F is not Schur-stable (spectral radius {poles.spectral_radius:.4f})"
        )
    zeros = eigen_spectrum(sys.A - sys.B @ sys.C)
    if zeros.unstable_count or zeros.unit_circle_count:
        raise NonMinimumPhaseError(
            f"F - GH is not Schur-stable (spectral radius {zeros.spectral_radius:.4f}); Z is unstable"
        )
    if not is_controllable(sys.A, sys.B):
        raise NonMinimalRealizationError("(F, G) is not controllable")
    if not is_observable(sys.A, sys.C):
        raise NonMinimalRealizationError("(F, H) is not observable")


def normalize_gain(spec: ChannelSpec) -> ChannelModel:
    """
    Scale the channel so the feedthrough of Z^-1 is 1.

    A realization with feedthrough d has Z(inf) = g = 1/d; scaling Z by 1/g
    divides H by d. Input powers of the normalized channel relate to the
    original ones by P_normalized = P / g^2.

    Raises:
        DegenerateChannelError: if the feedthrough is zero
    """
    sys, name = _realization_from_spec(spec)
    d = float(sys.D[0, 0])
    if d == 0.0:
        raise DegenerateChannelError("Channel feedthrough is zero; Z(inf) is undefined")

    prior_gain = spec.gain if isinstance(spec, ChannelModel) else 1.0
    if d == 1.0:
        normalized = sys
    else:
        normalized = StateSpaceSystem(A=sys.A, B=sys.B, C=sys.C / d, D=[[1.0]])
        logger.warning(f"Channel feedthrough {d:g} normalized to 1 (Z scaled by {d:g})")

    _check_realization(normalized)
    return ChannelModel(
        inv_z=normalized,
        gain=prior_gain / d,
        gain_normalized=prior_gain / d != 1.0,
        name=name,
    )


def validate(spec: ChannelSpec) -> ChannelModel:
    """
    Validate a channel specification.

    Args:
        spec: ChannelModel, StateSpaceSystem or JSON-style dictionary

    Returns:
        ChannelModel with unit feedthrough

    Raises:
        UnstableChannelError, NonMinimumPhaseError, NonMinimalRealizationError,
        DegenerateChannelError, DimensionError
    """
    channel = normalize_gain(spec)
    logger.debug(f"Validated channel {channel.name!r} of order {channel.order}")
    return channel


def augment(channel: ChannelModel, A: np.ndarray, C: np.ndarray) -> AugmentedPlant:
    """
    Stack an encoder (A, C) with the channel into AA, CC, DD.

    Raises:
        UnitCircleError: if A has an eigenvalue on the unit circle
        EigenvalueCollisionError: if A and F share an eigenvalue
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    k = A.shape[0]
    C = np.asarray(C, dtype=float)
    if C.size != k:
        raise DimensionError(f"C must be 1 x {k}, got {C.shape}")

    spectrum = eigen_spectrum(A)
    if spectrum.unit_circle_count:
        raise UnitCircleError("Encoder matrix A has eigenvalues on the unit circle")
    if channel.order:
        channel_eigs = np.linalg.eigvals(channel.F)
        separation = np.min(np.abs(spectrum.eigenvalues[:, None] - channel_eigs[None, :]))
        if separation <= NUMERICS_CONFIG["collision_tol"]:
            raise EigenvalueCollisionError(
                f"Encoder and channel share an eigenvalue (separation {separation:.2e})"
            )
    return AugmentedPlant.from_blocks(A, C, channel.F, channel.G, channel.H)


def simulate_channel_step(
    channel: ChannelModel,
    s: np.ndarray,
    u: float,
    noise: float,
) -> Tuple[np.ndarray, float]:
    """One channel use: returns (s[t+1], y[t])."""
    s = np.asarray(s, dtype=float).ravel()
    if s.size != channel.order:
        raise DimensionError(f"Channel state must have length {channel.order}, got {s.size}")
    y = float(channel.H @ s) + u + noise if channel.order else u + noise
    s_next = channel.F @ s + channel.G[:, 0] * u
    return s_next, y


def simulate_channel(channel: ChannelModel, u: Sequence[float], noise: Sequence[float]) -> np.ndarray:
    """Outputs y[0..T] from zero initial state."""
    u = np.asarray(u, dtype=float)
    noise = np.asarray(noise, dtype=float)
    s = np.zeros(channel.order)
    y = np.empty_like(u)
    for t in range(u.size):
        s, y[t] = simulate_channel_step(channel, s, u[t], noise[t])
    return y


def upper_bound_gain(channel: ChannelModel, z: complex) -> float:
    """|Z(z)|^2, used by the closed-form power bound."""
    inv = channel.inverse_response(z)
    if abs(inv) <= NUMERICS_CONFIG["tau_circ"]:
        raise SingularityError(f"Z has a pole at z = {z}")
    return float(abs(1.0 / inv) ** 2)


def load_channel(path: Union[str, Path]) -> ChannelModel:
    """Load and validate a channel JSON file."""
    payload = load_from_json(path)
    channel = validate(payload)
    logger.info(f"Loaded channel {channel.name or Path(path).stem!r} (order {channel.order}) from {path}")
    return channel


def save_channel(channel: ChannelModel, path: Union[str, Path]) -> Path:
    return export_to_json(channel.to_dict(), path)


def bundled_channel(name: str = "third_order") -> ChannelModel:
    """Channels shipped with the package: "third_order" and "awgn"."""
    path = CHANNELS_DIR / f"{name}.json"
    if not path.exists():
        raise ValidationError(f"No bundled channel named {name!r}")
    return load_channel(path)
