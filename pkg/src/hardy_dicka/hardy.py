"""N-party Hardy-point machinery: root, angle, state and probability checks.

All quantities derive from t_r, the positive root other than 1 of
x^(N+1) - 2x + 1. Setting 0 measures in the computational basis; setting 1
measures in the basis rotated by alpha = 2*arccos(sqrt(t_r)), with zero
phase for every party.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import comb
from typing import Optional, Sequence

import numpy as np

from .qstate import Ket, born_prob

ROOT_ATOL = 1e-12


class HardyError(ValueError):
    """Raised for invalid party counts, settings or outcome vectors."""


def solve_tr(n: int) -> float:
    """Positive root of x^(n+1) - 2x + 1 in (0, 1), excluding x = 1.

    Bisection on (0, 1 - 1e-9) brackets the root away from 1 (the
    polynomial has exactly two positive roots); a few Newton steps polish
    to full double precision.
    """
    if n < 2:
        raise HardyError(f"party count must be >= 2, got {n}")

    def f(x: float) -> float:
        return x ** (n + 1) - 2.0 * x + 1.0

    lo, hi = 1e-12, 1.0 - 1e-9
    if not (f(lo) > 0.0 > f(hi)):
        raise HardyError("root bracketing failed")  # pragma: no cover
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(6):
        x -= f(x) / ((n + 1) * x**n - 2.0)
    if abs(f(x)) > ROOT_ATOL:
        raise HardyError(f"root residual {f(x):.3e} exceeds {ROOT_ATOL}")
    return float(x)


@dataclass(frozen=True)
class HardyParams:
    """Scalars of the maximal N-party Hardy point."""

    n: int
    t_r: float
    alpha: float
    p_max: float
    l_n: float

    def __post_init__(self):
        if abs(self.t_r ** (self.n + 1) - 2 * self.t_r + 1) > ROOT_ATOL:
            raise HardyError("t_r does not satisfy its defining polynomial")
        if abs(self.alpha - 2.0 * np.arccos(np.sqrt(self.t_r))) > ROOT_ATOL:
            raise HardyError("alpha inconsistent with t_r")
        t = self.t_r
        if abs(self.p_max - t**self.n * (1 - t) ** self.n / (1 - t**self.n)) > ROOT_ATOL:
            raise HardyError("p_max inconsistent with t_r")

    @property
    def cot_half_alpha(self) -> float:
        return np.cos(self.alpha / 2.0) / np.sin(self.alpha / 2.0)

    @property
    def all_one_success(self) -> float:
        """P(+1,...,+1 | all setting-1) = (1 - t)^n / (1 - t^n)."""
        t = self.t_r
        return (1 - t) ** self.n / (1 - t**self.n)


def hardy_params(n: int) -> HardyParams:
    """All Hardy-point scalars for ``n`` parties."""
    t = solve_tr(n)
    alpha = float(2.0 * np.arccos(np.sqrt(t)))
    p_max = t**n * (1 - t) ** n / (1 - t**n)
    cot2 = np.cos(alpha / 2.0) ** 2 / np.sin(alpha / 2.0) ** 2
    l_n = float(sum(comb(n, k) * cot2**k for k in range(n)))
    return HardyParams(n=n, t_r=t, alpha=alpha, p_max=float(p_max), l_n=l_n)


@dataclass(frozen=True)
class Measurement:
    """Projector pair for one party and one setting; outcome +1 first."""

    party: int
    setting: int
    proj_plus: np.ndarray = field(repr=False)
    proj_minus: np.ndarray = field(repr=False)

    def projector(self, outcome: int) -> np.ndarray:
        if outcome == 1:
            return self.proj_plus
        if outcome == -1:
            return self.proj_minus
        raise HardyError(f"outcome must be +1 or -1, got {outcome}")


def setting_basis(params: HardyParams, setting: int) -> np.ndarray:
    """2x2 matrix whose columns are the (+1, -1) eigenvectors of a setting."""
    if setting == 0:
        return np.eye(2, dtype=complex)
    if setting == 1:
        c, s = np.cos(params.alpha / 2.0), np.sin(params.alpha / 2.0)
        return np.array([[c, -s], [s, c]], dtype=complex)
    raise HardyError(f"setting must be 0 or 1, got {setting}")


def measurement(params: HardyParams, party: int, setting: int) -> Measurement:
    """Projective measurement of ``party`` for ``setting``."""
    basis = setting_basis(params, setting)
    plus, minus = basis[:, 0], basis[:, 1]
    return Measurement(
        party=party,
        setting=setting,
        proj_plus=np.outer(plus, plus.conj()),
        proj_minus=np.outer(minus, minus.conj()),
    )


def default_measurements(params: HardyParams) -> list:
    """Per-party [setting-0, setting-1] measurement pairs."""
    return [
        [measurement(params, p, 0), measurement(params, p, 1)]
        for p in range(params.n)
    ]


def build_hardy_state(params: HardyParams) -> Ket:
    """The N-qubit Hardy state in the computational basis.

    In the setting-1 eigenbasis the amplitude on a string with k minus
    factors is cot^k(alpha/2) / sqrt(l_n) for k <= N-1 and exactly 0 for
    the all-minus string; the basis change per qubit maps it back to the
    computational basis. Permutation symmetry and the vanishing all-minus
    amplitude are checked before returning.
    """
    n, cot = params.n, params.cot_half_alpha
    coeffs = np.zeros(2**n)
    for index in range(2**n):
        k = index.bit_count()
        if k <= n - 1:
            coeffs[index] = cot**k
    coeffs /= np.sqrt(params.l_n)
    norm_err = abs(np.linalg.norm(coeffs) - 1.0)
    if norm_err > 1e-9:
        raise HardyError(f"l_n normalization off by {norm_err:.3e}")

    basis = setting_basis(params, 1)
    change = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        change = np.kron(change, basis)
    state = Ket(n, change @ coeffs)

    minus = basis[:, 1]
    all_minus = minus.copy()
    for _ in range(n - 1):
        all_minus = np.kron(all_minus, minus)
    if abs(np.vdot(all_minus, state.amps)) > 1e-12:
        raise HardyError("all-minus amplitude in the setting-1 basis is not 0")
    return state


def hardy_probability(
    params: HardyParams,
    settings: Sequence[int],
    outcomes: Sequence[int],
    state: Optional[Ket] = None,
) -> float:
    """Born probability of a joint outcome at the Hardy point.

    ``settings`` and ``outcomes`` must both have length n; entries of
    ``outcomes`` are +1 or -1. A precomputed ``state`` avoids rebuilding.
    """
    if len(settings) != params.n or len(outcomes) != params.n:
        raise HardyError(
            f"settings/outcomes must have length {params.n}, "
            f"got {len(settings)}/{len(outcomes)}"
        )
    if state is None:
        state = build_hardy_state(params)
    projs = [
        measurement(params, p, settings[p]).projector(outcomes[p])
        for p in range(params.n)
    ]
    return born_prob(state, projs)


def pairwise_marginal(
    params: HardyParams,
    i: int,
    j: int,
    s_i: int,
    s_j: int,
    state: Optional[Ket] = None,
) -> float:
    """P(+1,+1 | settings s_i, s_j) for parties i, j, others traced out."""
    if i == j:
        raise HardyError("pairwise marginal needs two distinct parties")
    if state is None:
        state = build_hardy_state(params)
    projs: list = [None] * params.n
    projs[i] = measurement(params, i, s_i).proj_plus
    projs[j] = measurement(params, j, s_j).proj_plus
    return born_prob(state, projs)


@dataclass(frozen=True)
class HardyReport:
    """Outcome of checking the Hardy conditions on a state."""

    p_observed: float
    zero_conditions: tuple
    passed: bool
    eps1: float
    eps2: float
    p_target: float
    stat_tol: float


def verify_conditions(
    state: Ket,
    measurements: Optional[list] = None,
    eps1: float = 0.0,
    eps2: float = 0.0,
    params: Optional[HardyParams] = None,
    stat_tol: float = 1e-9,
) -> HardyReport:
    """Check the N-party Hardy conditions on an arbitrary state.

    Evaluates P(+..+ | all-0), the N cyclic zero conditions
    P(+,+ | i:1, i+1:0), and P(-..- | all-1). Passes when the success
    probability is within ``stat_tol`` of p_max - eps1 and every zero
    condition is at most eps2 (plus a 1e-12 numerical floor).
    """
    n = state.n_qubits
    if params is None:
        params = hardy_params(n)
    if measurements is None:
        measurements = default_measurements(params)
    if len(measurements) != n:
        raise HardyError(f"need {n} measurement pairs, got {len(measurements)}")

    projs = [measurements[p][0].proj_plus for p in range(n)]
    p_obs = born_prob(state, projs)

    zeros = []
    for i in range(n):
        j = (i + 1) % n
        marg: list = [None] * n
        marg[i] = measurements[i][1].proj_plus
        marg[j] = measurements[j][0].proj_plus
        zeros.append((f"P(+,+|A{i + 1}^1,A{j + 1}^0)", born_prob(state, marg)))
    all_minus = [measurements[p][1].proj_minus for p in range(n)]
    zeros.append((f"P({'-' * n}|{'1' * n})", born_prob(state, all_minus)))

    p_target = params.p_max - eps1
    ok = abs(p_obs - p_target) <= stat_tol
    floor = 1e-12
    ok = ok and all(v <= eps2 + floor for _, v in zeros)
    return HardyReport(
        p_observed=p_obs,
        zero_conditions=tuple(zeros),
        passed=bool(ok),
        eps1=eps1,
        eps2=eps2,
        p_target=p_target,
        stat_tol=stat_tol,
    )


def outcome_distribution(params: HardyParams, settings: Sequence[int]) -> np.ndarray:
    """All 2^n joint outcome probabilities at fixed settings.

    Index bit b of the outcome index encodes outcome (-1)^b for the
    corresponding party, so index 0 is the all-+1 event.
    """
    state = build_hardy_state(params)
    basis = [setting_basis(params, s) for s in settings]
    change = np.array([[1.0]], dtype=complex)
    for b in basis:
        change = np.kron(change, b.conj().T)
    amps = change @ state.amps
    probs = np.abs(amps) ** 2
    return probs / probs.sum()
