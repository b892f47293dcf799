"""Closed-form key-rate quantities and Bell-operator coefficient builders.

Covers the ideal rates of both protocols, the noisy-rate chain
(omega, QBER bound, Devetak-Winter), the biased-RNG closed-form guessing
probability of the input-key protocol, and the Holz / Parity-CHSH
coefficient maps used as benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Dict, Sequence, Tuple

import numpy as np

from .hardy import HardyError, HardyParams, hardy_params


class KeyrateError(ValueError):
    """Raised for out-of-range noise or bias parameters."""


def protocol1_rate(n: int) -> float:
    """Ideal N-party rate t^N (1-t)^N / (2^(N-1) (1-t^N))."""
    p = hardy_params(n)
    t = p.t_r
    return t**n * (1 - t) ** n / (2 ** (n - 1) * (1 - t**n))


def protocol2_rate(n: int) -> float:
    """Ideal pairwise rate t^N (1-t)^(N-1) / (2 (1-t^N))."""
    p = hardy_params(n)
    t = p.t_r
    return t**n * (1 - t) ** (n - 1) / (2 * (1 - t**n))


def dropping_fraction(n: int) -> float:
    """Fraction of all-setting-1 successes kept: P(+..+|0..0)/P(+..+|1..1) = t^N."""
    return hardy_params(n).t_r ** n


@dataclass(frozen=True)
class NoiseParams:
    """Admissible deviations from the ideal Hardy conditions."""

    eps1: float = 0.0
    eps2: float = 0.0

    def __post_init__(self):
        if self.eps1 < 0 or self.eps2 < 0:
            raise KeyrateError("noise parameters must be nonnegative")


def omega(params: HardyParams, noise: NoiseParams) -> float:
    """Per-round key-bit probability (p_max - eps1)/4 for the tripartite case."""
    if params.n != 3:
        raise KeyrateError("the noisy analysis is tripartite; need n = 3")
    if noise.eps1 >= params.p_max:
        raise KeyrateError(
            f"eps1 = {noise.eps1} must be below p_max = {params.p_max:.8f}"
        )
    return (params.p_max - noise.eps1) / 4.0


def qber_bound(params: HardyParams, noise: NoiseParams) -> float:
    """Upper bound 3*eps2 / (p_max - eps1 + 3*eps2) on the QBER."""
    if params.n != 3:
        raise KeyrateError("the noisy analysis is tripartite; need n = 3")
    if noise.eps1 >= params.p_max:
        raise KeyrateError(
            f"eps1 = {noise.eps1} must be below p_max = {params.p_max:.8f}"
        )
    return 3.0 * noise.eps2 / (params.p_max - noise.eps1 + 3.0 * noise.eps2)


def binary_entropy(x: float) -> float:
    """h(x) = -x log2 x - (1-x) log2 (1-x), continuously extended at 0 and 1."""
    if not 0.0 <= x <= 1.0:
        raise KeyrateError(f"binary entropy argument {x} outside [0, 1]")
    if x in (0.0, 1.0):
        return 0.0
    return float(-x * np.log2(x) - (1 - x) * np.log2(1 - x))


def dw_rate(params: HardyParams, noise: NoiseParams, p_guess: float) -> float:
    """Devetak-Winter rate Omega * (-log2 p_guess - h(QBER)), clamped at 0.

    A clamped value of 0 means the protocol aborts at these tolerances.
    """
    if not 0.5 <= p_guess <= 1.0 + 1e-9:
        raise KeyrateError(f"p_guess = {p_guess} outside [1/2, 1]")
    p_guess = min(p_guess, 1.0)
    raw = omega(params, noise) * (
        -np.log2(p_guess) - binary_entropy(qber_bound(params, noise))
    )
    return float(max(raw, 0.0))


def hardy_setting_bias() -> float:
    """Setting-0 probability r_H that removes the dropping step.

    Solves r^3 q = (1-r)^3 q~ with q = P(+..+|000) and q~ = P(+..+|111);
    since q~/q = 1/t^3 the closed form is r = 1/(1 + t_r).
    """
    return 1.0 / (1.0 + hardy_params(3).t_r)


@dataclass(frozen=True)
class BiasModel:
    """Per-party setting-0 probability ``base`` shifted by +/- ``eps``."""

    base: float
    eps: float

    def __post_init__(self):
        if not 0.0 < self.base < 1.0:
            raise KeyrateError(f"base probability {self.base} outside (0, 1)")
        if not 0.0 <= self.eps < min(self.base, 1.0 - self.base):
            raise KeyrateError(
                f"eps = {self.eps} outside [0, min(base, 1-base)) for base {self.base}"
            )

    def pattern_probs(self, pattern: Sequence[int]) -> Tuple[float, ...]:
        """Per-party setting-0 probabilities for a sign pattern in {+1,-1}^3."""
        return tuple(self.base + s * self.eps for s in pattern)


SIGN_PATTERNS: Tuple[Tuple[int, int, int], ...] = tuple(
    product((1, -1), repeat=3)
)


def biased_setting_distribution(
    bias: BiasModel, pattern: Sequence[int]
) -> Dict[Tuple[int, int, int], float]:
    """Joint setting distribution P(s1, s2, s3) for one sign pattern."""
    p0 = bias.pattern_probs(pattern)
    dist = {}
    for s in product((0, 1), repeat=3):
        dist[s] = float(
            np.prod([p0[k] if s[k] == 0 else 1.0 - p0[k] for k in range(3)])
        )
    return dist


def hardy_biased_guess(bias: BiasModel) -> float:
    """Eve's closed-form guessing probability under the eight biased patterns.

    For each pattern the key-0 posterior is q P(000) / (q P(000) + q~ P(111));
    Eve guesses the likelier bit and the eight patterns are averaged
    uniformly. Exactly 1/2 at eps = 0 when ``base`` is r_H.
    """
    params = hardy_params(3)
    q = params.p_max
    q_tilde = params.all_one_success
    total = 0.0
    for pattern in SIGN_PATTERNS:
        dist = biased_setting_distribution(bias, pattern)
        w0 = q * dist[(0, 0, 0)]
        w1 = q_tilde * dist[(1, 1, 1)]
        p_key0 = w0 / (w0 + w1)
        # posteriors within one rounding ulp of 1/2 count as balanced, so
        # the unbiased r_H source gives exactly 1/2
        advantage = abs(p_key0 - 0.5)
        total += 0.5 + (advantage if advantage > 1e-15 else 0.0)
    return total / len(SIGN_PATTERNS)


# ---------------------------------------------------------------------------
# Bell expressions

TermKey = Tuple[Tuple[int, ...], Tuple[int, ...]]  # (parties, settings)


@dataclass(frozen=True)
class BellExpression:
    """Linear combination of correlators <prod_i A_i^{s_i}>.

    ``coefficients`` maps (parties, settings) to a real weight; parties are
    0-based and strictly increasing per key. ``quantum_max`` is the maximal
    quantum value of the unbiased expression.
    """

    coefficients: Tuple[Tuple[TermKey, float], ...]
    quantum_max: float
    name: str

    def as_dict(self) -> Dict[TermKey, float]:
        return dict(self.coefficients)

    def is_zero(self) -> bool:
        return all(abs(v) < 1e-15 for _, v in self.coefficients)


def _normalize_dist(bias_dist) -> Dict[Tuple[int, int, int], float]:
    dist = dict(bias_dist)
    if set(dist) != set(product((0, 1), repeat=3)):
        raise KeyrateError("bias distribution must cover all 8 setting triples")
    return dist


def uniform_setting_distribution() -> Dict[Tuple[int, int, int], float]:
    return {s: 0.125 for s in product((0, 1), repeat=3)}


def holz_expression(bias_dist=None) -> BellExpression:
    """Holz-type tripartite operator, reweighted by a setting distribution.

    Each printed term carries 8 times the probability of its full setting
    triple; two-body terms use setting 0 for the absent party. The unbiased
    quantum maximum is 3/2.
    """
    dist = _normalize_dist(bias_dist) if bias_dist is not None else uniform_setting_distribution()
    w = lambda s: 8.0 * dist[s]
    terms: Dict[TermKey, float] = {}

    def add(parties, settings, full_settings, coeff):
        key = (tuple(parties), tuple(settings))
        terms[key] = terms.get(key, 0.0) + coeff * w(tuple(full_settings))

    for s2, s3 in product((0, 1), repeat=2):
        add((0, 1, 2), (1, s2, s3), (1, s2, s3), 0.25)
    add((0, 1), (0, 0), (0, 0, 0), -0.5)
    add((0, 1), (0, 1), (0, 1, 0), 0.5)
    add((0, 2), (0, 0), (0, 0, 0), -0.5)
    add((0, 2), (0, 1), (0, 0, 1), 0.5)
    add((1, 2), (0, 0), (0, 0, 0), -0.25)
    add((1, 2), (0, 1), (0, 0, 1), 0.25)
    add((1, 2), (1, 0), (0, 1, 0), 0.25)
    add((1, 2), (1, 1), (0, 1, 1), -0.25)
    return BellExpression(
        coefficients=tuple(sorted(terms.items())),
        quantum_max=1.5,
        name="holz",
    )


def parity_chsh_expression(bias_dist=None) -> BellExpression:
    """Parity-CHSH tripartite operator; unbiased quantum maximum sqrt(2)."""
    dist = _normalize_dist(bias_dist) if bias_dist is not None else uniform_setting_distribution()
    w = lambda s: 8.0 * dist[s]
    terms: Dict[TermKey, float] = {}

    def add(parties, settings, full_settings, coeff):
        key = (tuple(parties), tuple(settings))
        terms[key] = terms.get(key, 0.0) + coeff * w(tuple(full_settings))

    add((0, 1, 2), (1, 0, 0), (1, 0, 0), 0.5)
    add((0, 1, 2), (1, 1, 0), (1, 1, 0), -0.5)
    add((0, 1), (0, 0), (0, 0, 0), 0.5)
    add((0, 1), (0, 1), (0, 1, 0), 0.5)
    return BellExpression(
        coefficients=tuple(sorted(terms.items())),
        quantum_max=float(np.sqrt(2.0)),
        name="parity-chsh",
    )


def evaluate_bell(expr: BellExpression, state, observables) -> float:
    """Value of a Bell expression on an explicit qubit realization.

    ``observables[p][s]`` is the 2x2 observable of party p, setting s;
    ``state`` is a Ket on as many qubits as there are parties.
    """
    n = state.n_qubits
    total = 0.0
    for (parties, settings), coeff in expr.coefficients:
        ops = [np.eye(2, dtype=complex)] * n
        for p, s in zip(parties, settings):
            ops[p] = np.asarray(observables[p][s], dtype=complex)
        full = ops[0]
        for o in ops[1:]:
            full = np.kron(full, o)
        total += coeff * float(np.real(np.vdot(state.amps, full @ state.amps)))
    return total


def holz_reference_realization():
    """GHZ state and angles reaching the unbiased Holz maximum 3/2."""
    from .qstate import Ket

    z = np.diag([1.0, -1.0]).astype(complex)
    x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    b0 = (np.sqrt(3.0) * x + z) / 2.0
    b1 = (np.sqrt(3.0) * x - z) / 2.0
    observables = [[-z, x], [b0, b1], [b0, b1]]
    return Ket.ghz(3), observables


def parity_chsh_reference_realization():
    """GHZ state and angles reaching the unbiased Parity-CHSH maximum sqrt(2)."""
    from .qstate import Ket

    z = np.diag([1.0, -1.0]).astype(complex)
    x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    c0 = (z + x) / np.sqrt(2.0)
    c1 = (z - x) / np.sqrt(2.0)
    observables = [[z, x], [c0, c1], [x, x]]
    return Ket.ghz(3), observables
