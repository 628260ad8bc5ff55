"""
Asymptotic feedback capacity of stable minimum-phase ISI channels.

For a target rate R the encoder matrix is restricted to the companion form
A = [[0, I_n], [±2^R, a_f]] with C = [1, 0, ..., 0]; the steady-state input
power D Sigma D' of the stabilizing Riccati solution is minimized over a_f on
both sign branches. A first pass at n = m - 1 reveals how many unstable modes
the optimum needs (n* + 1); a second pass at n = n* returns a purely unstable
encoder. Capacity at a power budget is the inverse of this map.

Independent oracles live here as well: the closed-form upper bound, the
stationary Gauss-Markov formulation, the waterfilling feedforward capacity
and the all-pass/Bode checks of the designed loop.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
import itertools
import logging

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import optimize

from feedcap.config import EXECUTION_CONFIG, NUMERICS_CONFIG, OPTIMIZER_CONFIG
from feedcap.data.channel import ChannelModel, augment, upper_bound_gain, validate
from feedcap.exceptions import (
    BracketError,
    ConvergenceError,
    InfeasibleError,
    NumericalError,
    OptimizerError,
    ValidationError,
)
from feedcap.systems.riccati import (
    AugmentedPlant,
    RiccatiSolution,
    solve_steady_by_iteration,
    solve_steady_by_reduction,
    stabilizing_solution,
)
from feedcap.systems.statespace import (
    StateSpaceSystem,
    companion_form,
    degree_of_instability,
    eigen_spectrum,
    frequency_response,
    is_observable,
    solve_sylvester,
)
from feedcap.utils import to_db

logger = logging.getLogger(__name__)

BRANCHES = {"+DI": 1.0, "-DI": -1.0}


@dataclass
class BranchResult:
    """Best local-search outcome on one sign branch."""

    label: str
    objective: float
    a_f: np.ndarray
    restarts: int
    converged: List[bool] = field(default_factory=list)
    candidates: List[np.ndarray] = field(default_factory=list)
    evaluations: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "objective": self.objective if np.isfinite(self.objective) else None,
            "a_f": self.a_f.tolist(),
            "restarts": self.restarts,
            "converged": int(sum(self.converged)),
            "evaluations": self.evaluations,
        }


@dataclass
class OrderResult:
    """Minimum power at a fixed encoder order n, over both branches."""

    n: int
    label: str
    objective: float
    a_f: np.ndarray
    branches: Dict[str, BranchResult]

    @property
    def sign(self) -> float:
        return BRANCHES[self.label]


@dataclass
class OptimizerReport:
    """Per-pass, per-branch record of the capacity optimizer."""

    rate: float
    passes: List[OrderResult] = field(default_factory=list)
    n_star: int = 0

    def best_objective(self, label: str) -> float:
        """Lowest power reached on one sign branch over all passes (inf if never run)."""
        values = [p.branches[label].objective for p in self.passes if label in p.branches]
        return float(min(values, default=np.inf))

    def digest(self) -> Dict[str, Any]:
        best = {label: self.best_objective(label) for label in BRANCHES}
        return {
            "rate": self.rate,
            "n_star": self.n_star,
            "best_by_branch": {label: value if np.isfinite(value) else None for label, value in best.items()},
            "passes": [
                {
                    "n": p.n,
                    "branch": p.label,
                    "objective": p.objective,
                    "branches": {k: b.to_dict() for k, b in p.branches.items()},
                }
                for p in self.passes
            ],
        }


@dataclass(eq=False)
class EncoderDesign:
    """Capacity-achieving encoder together with its steady-state filter."""

    channel: ChannelModel
    n_star: int
    A_star: np.ndarray
    C_star: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    sigma_star: np.ndarray
    sigma_x_star: np.ndarray
    rate: float
    power: float
    ke: float
    branch: str = "+DI"
    report: Optional[OptimizerReport] = None

    @property
    def k(self) -> int:
        return self.n_star + 1

    @property
    def gain(self) -> np.ndarray:
        return np.concatenate([self.L1, self.L2])

    @property
    def plant(self) -> AugmentedPlant:
        return augment(self.channel, self.A_star, self.C_star)

    @property
    def degree_of_instability(self) -> float:
        return degree_of_instability(self.A_star)

    @property
    def a_f(self) -> np.ndarray:
        return self.A_star[-1, 1:].copy()

    def check_invariants(self, tol: float = 1e-6) -> Tuple[bool, List[str]]:
        """
        Check the structural invariants of an accepted design.

        Returns:
            Tuple of (is_valid, list of issues)
        """
        issues = []
        spectrum = eigen_spectrum(self.A_star)
        if spectrum.unstable_count != self.k:
            issues.append(f"A* has {self.k - spectrum.unstable_count} non-unstable eigenvalues")
        if abs(self.rate - np.log2(self.degree_of_instability)) > 1e-9:
            issues.append("rate differs from log2 DI(A*)")
        if abs(self.ke - 2.0 ** (2.0 * self.rate)) > tol * max(1.0, self.ke):
            issues.append(f"K_e = {self.ke:.9f} differs from 2^(2R) = {2 ** (2 * self.rate):.9f}")
        plant = self.plant
        power = float(plant.D_bb @ self.sigma_star @ plant.D_bb.T)
        if abs(power - self.power) > 1e-9 * max(1.0, self.power):
            issues.append("power differs from DD Sigma DD'")
        if not is_observable(self.A_star, self.C_star):
            issues.append("(A*, C*) is not observable")
        return len(issues) == 0, issues

    def summary(self) -> Dict[str, Any]:
        eigs = np.linalg.eigvals(self.A_star)
        return {
            "n_star": self.n_star,
            "branch": self.branch,
            "rate": self.rate,
            "power": self.power,
            "power_db": to_db(self.power) if self.power > 0 else None,
            "ke": self.ke,
            "eigenvalues": [complex(e) for e in eigs],
            "a_f": self.a_f.tolist(),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "channel": self.channel.to_dict(),
            "n_star": self.n_star,
            "branch": self.branch,
            "A_star": self.A_star.tolist(),
            "C_star": self.C_star.ravel().tolist(),
            "L1": self.L1.tolist(),
            "L2": self.L2.tolist(),
            "sigma_star": self.sigma_star.tolist(),
            "sigma_x_star": self.sigma_x_star.tolist(),
            "rate": self.rate,
            "power": self.power,
            "power_db": to_db(self.power) if self.power > 0 else None,
            "ke": self.ke,
            "report": self.report.digest() if self.report is not None else None,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "EncoderDesign":
        channel = validate(payload["channel"])
        k = int(payload["n_star"]) + 1
        return cls(
            channel=channel,
            n_star=int(payload["n_star"]),
            A_star=np.asarray(payload["A_star"], dtype=float).reshape(k, k),
            C_star=np.asarray(payload["C_star"], dtype=float).reshape(1, k),
            L1=np.asarray(payload["L1"], dtype=float),
            L2=np.asarray(payload["L2"], dtype=float),
            sigma_star=np.asarray(payload["sigma_star"], dtype=float),
            sigma_x_star=np.asarray(payload["sigma_x_star"], dtype=float),
            rate=float(payload["rate"]),
            power=float(payload["power"]),
            ke=float(payload["ke"]),
            branch=payload.get("branch", "+DI"),
        )


def encoder_matrices(top_coeff: float, a_f: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Companion encoder A and output row C = [1, 0, ..., 0]."""
    A = companion_form(top_coeff, a_f)
    C = np.zeros((1, A.shape[0]))
    C[0, 0] = 1.0
    return A, C


def steady_power(channel: ChannelModel, top_coeff: float, a_f: Sequence[float]) -> float:
    """
    Steady-state input power of a companion encoder, +inf when infeasible.

    Uses the reduced-order route: Sylvester decoupling then the stabilizing
    solution on the encoder block; the power is the (0, 0) entry of Sigma_x.
    """
    A, C = encoder_matrices(top_coeff, a_f)
    try:
        spectrum = eigen_spectrum(A)
        if spectrum.unit_circle_count:
            return np.inf
        if channel.order:
            channel_eigs = np.linalg.eigvals(channel.F)
            if np.min(np.abs(spectrum.eigenvalues[:, None] - channel_eigs[None, :])) <= NUMERICS_CONFIG["collision_tol"]:
                return np.inf
            phi = solve_sylvester(channel.F, A, -channel.G @ C)
            c_reduced = C + channel.H @ phi
        else:
            c_reduced = C
        sigma_x = stabilizing_solution(A, c_reduced)
    except (ValidationError, NumericalError, np.linalg.LinAlgError):
        return np.inf
    power = float(sigma_x[0, 0])
    return power if np.isfinite(power) else np.inf


def _local_search(channel: ChannelModel, sign: float, di: float, x0: np.ndarray) -> Tuple[np.ndarray, float, bool, int]:
    def objective(a_f):
        return steady_power(channel, sign * di, a_f)

    options = OPTIMIZER_CONFIG["nelder_mead"]
    result = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"xatol": options["xatol"], "fatol": options["fatol"], "maxiter": options["maxiter"]},
    )
    return np.asarray(result.x, dtype=float), float(result.fun), bool(result.success), int(result.nfev)


def minimize_power(
    channel: ChannelModel,
    rate: float,
    n: int,
    restarts: Optional[int] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
    extra_starts: Optional[Sequence[np.ndarray]] = None,
) -> OrderResult:
    """
    Minimize the steady-state power over a_f in R^n on both sign branches.

    Args:
        channel: Validated channel
        rate: Target rate in bits, DI = 2^rate
        n: Encoder order index (A is (n+1) x (n+1))
        restarts: Number of random starts in [-box, box]^n besides the zero start
        seed: Seed for the start points
        n_jobs: Worker threads
        extra_starts: Additional start points (warm starts)

    Returns:
        OrderResult with the winning branch
    """
    restarts = OPTIMIZER_CONFIG["restarts"] if restarts is None else restarts
    seed = OPTIMIZER_CONFIG["seed"] if seed is None else seed
    n_jobs = EXECUTION_CONFIG["threads"] if n_jobs is None else n_jobs
    di = 2.0 ** rate

    branches: Dict[str, BranchResult] = {}
    if n == 0:
        for label, sign in BRANCHES.items():
            value = steady_power(channel, sign * di, [])
            branches[label] = BranchResult(label, value, np.zeros(0), 0, [True], [np.zeros(0)], 1)
    else:
        rng = np.random.default_rng(seed)
        box = OPTIMIZER_CONFIG["start_box"]
        starts = [np.zeros(n)]
        starts += [np.asarray(s, dtype=float).ravel() for s in (extra_starts or []) if np.size(s) == n]
        starts += list(rng.uniform(-box, box, size=(restarts, n)))

        tasks = [(label, sign, x0) for label, sign in BRANCHES.items() for x0 in starts]
        outcomes = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_local_search)(channel, sign, di, x0) for _, sign, x0 in tasks
        )
        for label in BRANCHES:
            mine = [out for (lab, _, _), out in zip(tasks, outcomes) if lab == label]
            objectives = np.array([out[1] for out in mine])
            best = int(np.argmin(objectives))
            branches[label] = BranchResult(
                label=label,
                objective=float(objectives[best]),
                a_f=mine[best][0],
                restarts=len(mine),
                converged=[out[2] for out in mine],
                candidates=[out[0] for out in mine],
                evaluations=int(sum(out[3] for out in mine)),
            )

    plus, minus = branches["+DI"].objective, branches["-DI"].objective
    if not (np.isfinite(plus) or np.isfinite(minus)):
        raise OptimizerError(f"No feasible encoder found at rate {rate} with n = {n}")
    tie = abs(plus - minus) <= OPTIMIZER_CONFIG["branch_tie_tol"] * max(1.0, abs(plus))
    label = "+DI" if (tie or plus < minus) else "-DI"
    logger.debug(f"n={n}: +DI -> {plus:.6g}, -DI -> {minus:.6g}; chose {label}")
    return OrderResult(n=n, label=label, objective=branches[label].objective, a_f=branches[label].a_f, branches=branches)


def count_unstable_modes(A: np.ndarray, margin_bits: Optional[float] = None) -> int:
    """Eigenvalues whose log2 magnitude exceeds margin_bits."""
    margin_bits = OPTIMIZER_CONFIG["nstar_margin"] if margin_bits is None else margin_bits
    mags = np.abs(np.linalg.eigvals(A))
    return int(np.sum(np.log2(np.maximum(mags, 1e-300)) > margin_bits))


def _is_purely_unstable(result: OrderResult, di: float) -> bool:
    A, _ = encoder_matrices(result.sign * di, result.a_f)
    return eigen_spectrum(A).unstable_count == A.shape[0]


def _finalize(
    channel: ChannelModel,
    result: OrderResult,
    rate: float,
    report: OptimizerReport,
    verify: bool,
) -> EncoderDesign:
    di = 2.0 ** rate
    A, C = encoder_matrices(result.sign * di, result.a_f)
    plant = augment(channel, A, C)
    solution: RiccatiSolution
    if verify:
        try:
            solution = solve_steady_by_iteration(plant)
        except ConvergenceError as e:
            logger.warning(f"Riccati iteration did not converge ({e}); using the reduced-order solution")
            solution = solve_steady_by_reduction(plant)
    else:
        solution = solve_steady_by_reduction(plant)

    k = A.shape[0]
    return EncoderDesign(
        channel=channel,
        n_star=k - 1,
        A_star=A,
        C_star=C,
        L1=solution.gain[:k].copy(),
        L2=solution.gain[k:].copy(),
        sigma_star=solution.sigma,
        sigma_x_star=solution.sigma[:k, :k].copy(),
        rate=float(np.log2(degree_of_instability(A))),
        power=solution.power,
        ke=solution.ke,
        branch=result.label,
        report=report,
    )


def power_for_rate(
    channel: ChannelModel,
    rate: float,
    restarts: Optional[int] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
    pass1_order: Optional[int] = None,
    warm_starts: Optional[Dict[int, List[np.ndarray]]] = None,
    verify: bool = True,
) -> EncoderDesign:
    """
    Minimum steady-state power P_inf(R) and the encoder that attains it.

    Args:
        channel: Validated channel
        rate: Target rate in bits per channel use (> 0)
        restarts: Random restarts per branch
        seed: Seed for start points
        n_jobs: Worker threads
        pass1_order: Override the first-pass order (default m - 1)
        warm_starts: Extra start points keyed by order
        verify: Solve the final design by Riccati iteration (authoritative)

    Returns:
        EncoderDesign with a purely unstable A*

    Raises:
        ValidationError: if rate is not positive
        OptimizerError: if no branch is feasible
    """
    if not rate > 0:
        raise ValidationError(f"Rate must be positive, got {rate}")
    warm_starts = warm_starts or {}
    di = 2.0 ** rate
    n1 = max(channel.order - 1, 0) if pass1_order is None else pass1_order
    report = OptimizerReport(rate=rate)

    logger.info(f"Pass 1: rate {rate:.6g} bits, DI = {di:.6g}, n = {n1}")
    first = minimize_power(channel, rate, n1, restarts, seed, n_jobs, warm_starts.get(n1))
    report.passes.append(first)

    A_opt, _ = encoder_matrices(first.sign * di, first.a_f)
    n_star = max(count_unstable_modes(A_opt) - 1, 0)
    logger.info(f"Pass 1 optimum {first.objective:.6g} on {first.label}; n* = {n_star}")

    accepted: Optional[OrderResult] = None
    tried: List[OrderResult] = []
    for n in range(min(n_star, n1), n1 + 1):
        if n == n1:
            result = first
        else:
            logger.info(f"Pass 2: re-solving at n = {n}")
            result = minimize_power(channel, rate, n, restarts, seed, n_jobs, warm_starts.get(n))
            report.passes.append(result)
        tried.append(result)
        if _is_purely_unstable(result, di) and result.objective <= first.objective * (1 + 1e-6) + 1e-12:
            accepted = result
            break

    if accepted is None:
        clean = [r for r in tried if _is_purely_unstable(r, di) and np.isfinite(r.objective)]
        if not clean:
            raise OptimizerError(f"No purely unstable encoder found at rate {rate}")
        accepted = min(clean, key=lambda r: r.objective)
        logger.warning(f"Falling back to n = {accepted.n} (objective {accepted.objective:.6g})")

    report.n_star = accepted.n
    design = _finalize(channel, accepted, rate, report, verify)
    logger.info(
        f"Design: n* = {design.n_star}, branch {design.branch}, P_inf = {design.power:.6f}, K_e = {design.ke:.6f}"
    )
    return design


def capacity_for_power(
    channel: ChannelModel,
    power: float,
    restarts: Optional[int] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
    bracket: Optional[Tuple[float, float]] = None,
) -> Tuple[float, EncoderDesign]:
    """
    Feedback capacity C_inf(P) by root search on log P_inf(R) - log P.

    Args:
        channel: Validated channel
        power: Power budget (> 0)
        restarts: Random restarts per branch
        seed: Seed for start points
        n_jobs: Worker threads
        bracket: Initial rate bracket in bits

    Returns:
        Tuple of (capacity in bits, matching design)

    Raises:
        BracketError: if the bracket cannot be established
    """
    if not power > 0:
        raise ValidationError(f"Power must be positive, got {power}")
    low, high = bracket or OPTIMIZER_CONFIG["bracket"]
    warm: Dict[int, List[np.ndarray]] = {}

    def excess(rate: float) -> float:
        design = power_for_rate(channel, rate, restarts, seed, n_jobs, warm_starts=warm, verify=False)
        for result in design.report.passes:
            warm[result.n] = [result.a_f]
        return float(np.log(max(design.power, 1e-300)) - np.log(power))

    f_low, f_high = excess(low), excess(high)
    for _ in range(OPTIMIZER_CONFIG["bracket_expansions"]):
        if f_low <= 0 <= f_high:
            break
        if f_low > 0:
            low /= 10.0
            f_low = excess(low)
        if f_high < 0:
            high *= 2.0
            f_high = excess(high)
    if not f_low <= 0 <= f_high:
        raise BracketError(f"Could not bracket the capacity at power {power}", bracket=(low, high))

    logger.info(f"Capacity search for P = {power:.6g} in rate bracket [{low:.3g}, {high:.3g}]")
    rate = optimize.brentq(excess, low, high, xtol=OPTIMIZER_CONFIG["rate_xtol"])
    design = power_for_rate(channel, rate, restarts, seed, n_jobs, warm_starts=warm, verify=True)
    logger.info(f"C_inf({power:.6g}) = {design.rate:.6f} bits (P_inf = {design.power:.6f})")
    return design.rate, design


def upper_bound(channel: ChannelModel, rate: float) -> float:
    """
    Closed-form bound min over ± of (2^(2R) - 1) Z(±2^R)^2.

    Raises:
        SingularityError: if ±2^R is a pole of Z
    """
    di = 2.0 ** rate
    factor = di ** 2 - 1.0
    return min(factor * upper_bound_gain(channel, di), factor * upper_bound_gain(channel, -di))


def rate_power_curve(channel: ChannelModel, rates: Sequence[float], **kwargs) -> pd.DataFrame:
    """Tabulate P_inf(R) with the closed-form bound."""
    rows = []
    for rate in rates:
        design = power_for_rate(channel, rate, **kwargs)
        rows.append(
            {
                "rate": rate,
                "power": design.power,
                "power_db": to_db(design.power),
                "upper_bound": upper_bound(channel, rate),
                "n_star": design.n_star,
                "ke": design.ke,
            }
        )
    return pd.DataFrame(rows, columns=["rate", "power", "power_db", "upper_bound", "n_star", "ke"])


def grid_search_power(
    channel: ChannelModel,
    rate: float,
    n: int = 1,
    step: float = 0.01,
    box: Optional[float] = None,
) -> Tuple[float, np.ndarray, str]:
    """
    Exhaustive grid over a_f in [-box, box]^n on both branches.

    Returns:
        Tuple of (best power, best a_f, branch label)
    """
    box = OPTIMIZER_CONFIG["start_box"] if box is None else box
    di = 2.0 ** rate
    axis = np.arange(-box, box + step / 2, step)
    best = (np.inf, np.zeros(n), "+DI")
    for label, sign in BRANCHES.items():
        for point in itertools.product(axis, repeat=n):
            value = steady_power(channel, sign * di, point)
            if value < best[0]:
                best = (value, np.array(point), label)
    return best


def gm_rate_power(channel: ChannelModel, d: Sequence[float]) -> Tuple[float, float]:
    """
    Rate and power of the stationary Gauss-Markov input u = d' s_tilde.

    With Q = F + G d' and c = H + d', Sigma_s is the stabilizing solution of
    Sigma_s = Q Sigma_s Q' - Q Sigma_s c' c Sigma_s Q' / (1 + c Sigma_s c');
    rate = 1/2 log2(1 + c Sigma_s c') and power = d' Sigma_s d.

    Raises:
        InfeasibleError: if Q has unit-circle modes or unobservable unstable modes
    """
    if channel.order == 0:
        raise ValidationError("The Gauss-Markov formulation needs a channel with memory (m >= 1)")
    d = np.asarray(d, dtype=float).reshape(1, channel.order)
    Q = channel.F + channel.G @ d
    c = channel.H + d
    try:
        sigma_s = stabilizing_solution(Q, c)
    except (ValidationError, NumericalError, np.linalg.LinAlgError) as e:
        raise InfeasibleError(f"No stabilizing solution for d = {d.ravel()}: {e}") from e
    rate = 0.5 * float(np.log2(1.0 + c @ sigma_s @ c.T))
    power = float(d @ sigma_s @ d.T)
    return rate, power


def _gm_ray_point(channel: ChannelModel, direction: np.ndarray, power: float) -> Tuple[float, np.ndarray]:
    """Best rate on the power surface along a ray, with the d that reaches it."""
    direction = np.asarray(direction, dtype=float).ravel()
    best_rate, best_d = 0.0, np.zeros(channel.order)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return best_rate, best_d
    unit = direction / norm

    def power_at(scale: float) -> float:
        try:
            return gm_rate_power(channel, scale * unit)[1]
        except InfeasibleError:
            return np.nan

    scales = np.geomspace(1e-3, 1e3, 61)
    powers = np.array([power_at(s) for s in scales])
    for i in range(len(scales) - 1):
        p0, p1 = powers[i], powers[i + 1]
        if not (np.isfinite(p0) and np.isfinite(p1)) or (p0 - power) * (p1 - power) > 0:
            continue
        try:
            scale = optimize.brentq(lambda s: power_at(s) - power, scales[i], scales[i + 1], xtol=1e-12)
            rate = gm_rate_power(channel, scale * unit)[0]
        except (ValueError, InfeasibleError):
            continue
        if rate > best_rate:
            best_rate, best_d = rate, scale * unit
    return best_rate, best_d


def _gm_rate_on_ray(channel: ChannelModel, direction: np.ndarray, power: float) -> float:
    return _gm_ray_point(channel, direction, power)[0]


def gm_capacity_for_power(
    channel: ChannelModel,
    power: float,
    restarts: Optional[int] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
) -> Tuple[float, np.ndarray]:
    """
    Maximize the Gauss-Markov rate over d subject to d' Sigma_s d = power.

    Each direction of d is scaled onto the power surface by a root search
    along the ray; Nelder-Mead then searches over directions.

    Returns:
        Tuple of (rate in bits, maximizing d); d lies on the power surface
    """
    restarts = OPTIMIZER_CONFIG["gm_restarts"] if restarts is None else restarts
    seed = OPTIMIZER_CONFIG["seed"] if seed is None else seed
    n_jobs = EXECUTION_CONFIG["threads"] if n_jobs is None else n_jobs
    rng = np.random.default_rng(seed)
    starts = list(rng.standard_normal(size=(max(restarts, 1), channel.order)))

    def search(x0):
        result = optimize.minimize(
            lambda v: -_gm_rate_on_ray(channel, v, power),
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 2000},
        )
        return np.asarray(result.x), -float(result.fun)

    outcomes = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(search)(x0) for x0 in starts)
    best = int(np.argmax([rate for _, rate in outcomes]))
    rate, d_opt = _gm_ray_point(channel, outcomes[best][0], power)
    logger.info(f"Gauss-Markov rate at P = {power:.6g}: {rate:.6f} bits")
    return rate, d_opt


def feedforward_capacity(channel: ChannelModel, power: float, grid: int = 4096) -> float:
    """
    Waterfilling capacity over the noise spectrum |Z(e^(j 2 pi theta))|^2.

    Args:
        channel: Validated channel
        power: Power budget
        grid: Number of midpoint quadrature nodes on [-1/2, 1/2]

    Returns:
        Capacity in bits per channel use
    """
    if not power > 0:
        raise ValidationError(f"Power must be positive, got {power}")
    theta = (np.arange(grid) + 0.5) / grid - 0.5
    spectrum = channel.noise_spectrum(theta)

    def allocated(level: float) -> float:
        return float(np.mean(np.maximum(level - spectrum, 0.0))) - power

    level = optimize.brentq(allocated, spectrum.min(), spectrum.max() + 2.0 * power, xtol=1e-14)
    return float(np.mean(0.5 * np.log2(np.maximum(level / spectrum, 1.0))))


def closed_loop_transfer(design: EncoderDesign) -> StateSpaceSystem:
    """Noise-to-innovation map T_Ne of the steady-state loop: (AA - L CC, -L, CC, 1)."""
    plant = design.plant
    gain = design.gain.reshape(-1, 1)
    return StateSpaceSystem(
        A=plant.A_bb - gain @ plant.C_bb,
        B=-gain,
        C=plant.C_bb,
        D=[[1.0]],
    )


def allpass_deviation(design: EncoderDesign, samples: int = 128) -> float:
    """Largest | |T_Ne| - DI(A*) | over uniformly sampled frequencies."""
    theta = np.arange(samples) / samples - 0.5
    response = frequency_response(closed_loop_transfer(design), theta)
    return float(np.max(np.abs(np.abs(response) - design.degree_of_instability)))


def bode_integral(design: EncoderDesign, grid: int = 4096) -> float:
    """Numerical integral of log |T_Ne| over theta in [-1/2, 1/2] (natural log)."""
    theta = (np.arange(grid) + 0.5) / grid - 0.5
    response = frequency_response(closed_loop_transfer(design), theta)
    return float(np.mean(np.log(np.abs(response))))
