"""Seeded Monte Carlo execution of the two conference-key protocols.

Randomness is counter-based: every random draw is element ``round`` of a
Philox stream keyed by (seed, stage), so runs are reproducible bit for bit
and independent of chunking. Outcome sampling uses per-setting joint
distributions computed once from the (optionally depolarized) state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from itertools import product
from typing import Optional, Tuple, Union

import numpy as np
from scipy import stats

from .hardy import HardyParams, build_hardy_state, hardy_params, setting_basis
from .keyrate import BiasModel

STAGE_PATTERN = 0
STAGE_SETTINGS = 1  # + party index
STAGE_OUTCOME = 12
STAGE_TEST = 13
STAGE_DROP = 14  # + pair index for protocol 2
ABORT_SIGNIFICANCE = 1e-6


class ProtocolError(ValueError):
    """Raised for invalid protocol configuration."""


@dataclass(frozen=True)
class ProtocolConfig:
    """Run configuration; ``setting_dist`` is a per-party setting-0
    probability, or a BiasModel for the eight-pattern biased source."""

    n_parties: int = 3
    n_rounds: int = 1_000_000
    protocol: int = 1
    seed: int = 2024
    setting_dist: Union[float, BiasModel] = 0.5
    test_fraction: float = 0.1
    eps1: float = 0.0
    eps2: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        if self.protocol not in (1, 2):
            raise ProtocolError(f"protocol must be 1 or 2, got {self.protocol}")
        if self.n_parties < 2 or (self.protocol == 2 and self.n_parties < 3):
            raise ProtocolError("need >= 2 parties (>= 3 for protocol 2)")
        if not 0.0 < self.test_fraction < 1.0:
            raise ProtocolError("test_fraction must lie in (0, 1)")
        if not 0.0 <= self.noise <= 1.0:
            raise ProtocolError("depolarizing strength must lie in [0, 1]")
        if isinstance(self.setting_dist, (int, float)) and not 0.0 < self.setting_dist < 1.0:
            raise ProtocolError("setting-0 probability must lie in (0, 1)")

    @property
    def bias(self) -> Optional[BiasModel]:
        return self.setting_dist if isinstance(self.setting_dist, BiasModel) else None

    @property
    def base_setting0(self) -> float:
        b = self.bias
        return b.base if b is not None else float(self.setting_dist)

    def to_json(self) -> str:
        d = asdict(self)
        if self.bias is not None:
            d["setting_dist"] = {"base": self.bias.base, "eps": self.bias.eps}
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ProtocolConfig":
        d = json.loads(text)
        sd = d.get("setting_dist", 0.5)
        if isinstance(sd, dict):
            d["setting_dist"] = BiasModel(base=float(sd["base"]), eps=float(sd["eps"]))
        return cls(**d)


@dataclass(frozen=True)
class RunStats:
    """Summary of one protocol run."""

    rounds_used: int
    test_rounds: int
    aborted: bool
    sifted_bits: int
    dropped_rounds: int
    empirical_key_rate: float
    empirical_qber: float
    keys_agree: bool
    keys: Tuple[str, ...]
    abort_reason: str = ""
    eve_pattern_ids: Optional[Tuple[int, ...]] = field(default=None, repr=False)

    def to_json(self) -> str:
        d = asdict(self)
        if d["eve_pattern_ids"] is not None:
            d["eve_pattern_ids"] = list(d["eve_pattern_ids"])
        return json.dumps(d, indent=2)


# ---------------------------------------------------------------------------
# counter-based uniforms


def _stage_key(seed: int, stage: int) -> np.ndarray:
    return np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stage)])


def stage_uniforms(seed: int, stage: int, count: int) -> np.ndarray:
    """Uniform[0,1) vector, element r depending only on (seed, stage, r)."""
    gen = np.random.Generator(np.random.Philox(key=_stage_key(seed, stage)))
    return gen.random(count)


def stage_uniform_at(seed: int, stage: int, index: int) -> float:
    """Single element of :func:`stage_uniforms` via Philox counter jump.

    Each 128-bit Philox counter block yields four uint64 outputs, and
    ``Generator.random`` consumes one per double, so element ``index``
    lives in counter block index // 4.
    """
    bit = np.random.Philox(key=_stage_key(seed, stage))
    bit.advance(index // 4)  # advance counts 4-output counter blocks
    gen = np.random.Generator(bit)
    return float(gen.random(index % 4 + 1)[-1])


def sample_biased_settings(
    bias: BiasModel, round_index: int, seed: int, n_parties: int = 3
) -> Tuple[Tuple[int, ...], int]:
    """Settings tuple and active distribution id for one round.

    The distribution id (0..7, Eve's side information) selects one of the
    eight sign patterns uniformly; each party then draws its setting from
    the shifted probability. Matches the vectorized run path draw for draw.
    """
    pattern = int(stage_uniform_at(seed, STAGE_PATTERN, round_index) * 8) % 8
    signs = [1 if (pattern >> (n_parties - 1 - p)) & 1 == 0 else -1 for p in range(n_parties)]
    settings = []
    for p in range(n_parties):
        u = stage_uniform_at(seed, STAGE_SETTINGS + p, round_index)
        p0 = bias.base + signs[p] * bias.eps
        settings.append(0 if u < p0 else 1)
    return tuple(settings), pattern


# ---------------------------------------------------------------------------
# outcome model


def depolarized_state_matrix(params: HardyParams, noise: float) -> np.ndarray:
    """Density matrix of the Hardy state after per-qubit depolarizing."""
    state = build_hardy_state(params)
    rho = np.outer(state.amps, state.amps.conj())
    if noise == 0.0:
        return rho
    n = params.n
    eye = np.eye(2, dtype=complex)
    paulis = [
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]
    for q in range(n):
        ops = []
        for p_op, w in [(eye, 1 - 3 * noise / 4)] + [(s, noise / 4) for s in paulis]:
            full = np.array([[1.0 + 0j]])
            for k in range(n):
                full = np.kron(full, p_op if k == q else eye)
            ops.append((full, w))
        rho = sum(w * op @ rho @ op.conj().T for op, w in ops)
    return rho


def outcome_tables(params: HardyParams, noise: float) -> np.ndarray:
    """Cumulative joint-outcome distributions, one row per settings index.

    Row s (bits of s = settings left to right) holds the cumulative
    probabilities over the 2^n outcome indices; outcome bit 0 means +1.
    """
    n = params.n
    rho = depolarized_state_matrix(params, noise)
    tables = np.empty((2**n, 2**n))
    for s_idx, settings in enumerate(product((0, 1), repeat=n)):
        rot = np.array([[1.0 + 0j]])
        for s in settings:
            rot = np.kron(rot, setting_basis(params, s).conj().T)
        probs = np.real(np.diag(rot @ rho @ rot.conj().T))
        probs = np.clip(probs, 0.0, None)
        tables[s_idx] = np.cumsum(probs / probs.sum())
    return tables


def _sample_settings(config: ProtocolConfig, n: int):
    """Per-round settings matrix (n_rounds x n) and pattern ids (or None)."""
    rounds = config.n_rounds
    bias = config.bias
    patterns = None
    if bias is not None:
        patterns = (stage_uniforms(config.seed, STAGE_PATTERN, rounds) * 8).astype(np.int8) % 8
    settings = np.empty((rounds, n), dtype=np.int8)
    for p in range(n):
        u = stage_uniforms(config.seed, STAGE_SETTINGS + p, rounds)
        if bias is None:
            p0 = config.base_setting0
            settings[:, p] = (u >= p0).astype(np.int8)
        else:
            signs = 1 - 2 * ((patterns >> (n - 1 - p)) & 1)
            p0 = bias.base + signs * bias.eps
            settings[:, p] = (u >= p0).astype(np.int8)
    return settings, patterns


def _sample_outcomes(config: ProtocolConfig, params: HardyParams, settings: np.ndarray):
    """Outcome index per round (bit 0 of index = party 0, bit set = -1)."""
    rounds = settings.shape[0]
    n = params.n
    tables = outcome_tables(params, config.noise)
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    s_idx = settings.astype(np.int64) @ weights
    u = stage_uniforms(config.seed, STAGE_OUTCOME, rounds)
    outcome = np.empty(rounds, dtype=np.int64)
    for s in range(2**n):
        mask = s_idx == s
        if np.any(mask):
            outcome[mask] = np.searchsorted(tables[s], u[mask], side="right")
    return np.minimum(outcome, 2**n - 1)


# ---------------------------------------------------------------------------
# eavesdropping check (Step 3)


def _binom_two_sided_ok(k: int, n: int, p0: float) -> bool:
    if n == 0:
        return True
    lo = stats.binom.cdf(k, n, p0)
    hi = stats.binom.sf(k - 1, n, p0)
    return min(lo, hi) >= ABORT_SIGNIFICANCE / 2.0


def _binom_upper_ok(k: int, n: int, p0: float) -> bool:
    # one-sided: abort when observing k events is incompatible with p <= p0
    if n == 0 or k == 0:
        return True
    return stats.binom.sf(k - 1, n, p0) >= ABORT_SIGNIFICANCE


def _eavesdropping_check(
    params: HardyParams,
    settings: np.ndarray,
    outcome_idx: np.ndarray,
    test_mask: np.ndarray,
    eps1: float,
    eps2: float,
) -> Tuple[bool, str]:
    """Step-3 verification on the announced test subset."""
    n = params.n
    s = settings[test_mask]
    o = outcome_idx[test_mask]
    all_plus = o == 0

    sel = np.all(s == 0, axis=1)
    if not _binom_two_sided_ok(
        int(np.count_nonzero(sel & all_plus)), int(np.count_nonzero(sel)),
        params.p_max - eps1,
    ):
        return False, "success probability incompatible with p_max - eps1"

    for i in range(n):
        j = (i + 1) % n
        sel = (s[:, i] == 1) & (s[:, j] == 0)
        hit = sel & (((o >> (n - 1 - i)) & 1) == 0) & (((o >> (n - 1 - j)) & 1) == 0)
        if not _binom_upper_ok(
            int(np.count_nonzero(hit)), int(np.count_nonzero(sel)), eps2
        ):
            return False, f"zero condition P(+,+|A{i + 1}^1,A{j + 1}^0) above eps2"

    sel = np.all(s == 1, axis=1)
    hit = sel & (o == 2**n - 1)
    if not _binom_upper_ok(int(np.count_nonzero(hit)), int(np.count_nonzero(sel)), eps2):
        return False, "zero condition on the all-minus event above eps2"
    return True, ""


def _effective_drop(params: HardyParams, base0: float) -> float:
    """Keep fraction for setting-1 key rounds balancing the key bit.

    Uniform settings give the ideal t^n; the r_H-balanced source gives 1.
    """
    q = params.p_max
    q_tilde = params.all_one_success
    n = params.n
    ratio = (base0**n * q) / ((1.0 - base0) ** n * q_tilde)
    return min(1.0, ratio)


# ---------------------------------------------------------------------------
# protocol runs


def _write_transcript(path, settings, outcome_idx, kept, n):
    """Per-round CSV: round, settings, outcomes, kept flag, key bit."""
    with open(path, "w") as fh:
        fh.write("round,settings,outcomes,kept,key_bit\n")
        outcomes = [
            "".join("+" if ((idx >> (n - 1 - p)) & 1) == 0 else "-" for p in range(n))
            for idx in outcome_idx
        ]
        for r in range(settings.shape[0]):
            s = "".join(map(str, settings[r]))
            key = settings[r, 0] if kept[r] else ""
            fh.write(f"{r},{s},{outcomes[r]},{int(kept[r])},{key}\n")


def run_protocol1(config: ProtocolConfig, transcript: Optional[str] = None) -> RunStats:
    """All-party conference key: Steps 1-5 with the dropping strategy."""
    if config.protocol != 1:
        raise ProtocolError("config.protocol must be 1")
    n = config.n_parties
    params = hardy_params(n)
    settings, patterns = _sample_settings(config, n)
    outcome_idx = _sample_outcomes(config, params, settings)
    rounds = config.n_rounds

    test_mask = stage_uniforms(config.seed, STAGE_TEST, rounds) < config.test_fraction
    ok, reason = _eavesdropping_check(
        params, settings, outcome_idx, test_mask, config.eps1, config.eps2
    )
    if not ok:
        return RunStats(
            rounds_used=rounds,
            test_rounds=int(test_mask.sum()),
            aborted=True,
            sifted_bits=0,
            dropped_rounds=0,
            empirical_key_rate=0.0,
            empirical_qber=0.0,
            keys_agree=False,
            keys=tuple("" for _ in range(n)),
            abort_reason=reason,
        )

    all_plus = (outcome_idx == 0) & ~test_mask
    # A1 drops a fraction of her setting-1 successes to balance the key bit
    drop_keep = _effective_drop(params, config.base_setting0)
    u_drop = stage_uniforms(config.seed, STAGE_DROP, rounds)
    a1_one = settings[:, 0] == 1
    kept = all_plus & (~a1_one | (u_drop < drop_keep))
    dropped = int(np.count_nonzero(all_plus & a1_one & (u_drop >= drop_keep)))

    if transcript is not None:
        _write_transcript(transcript, settings, outcome_idx, kept, n)
    key_bits = settings[kept]  # per party: own setting is the key bit
    sifted = key_bits.shape[0]
    agree_rows = np.all(key_bits == key_bits[:, :1], axis=1) if sifted else np.array([], bool)
    qber = float(1.0 - agree_rows.mean()) if sifted else 0.0
    keys = tuple("".join(map(str, key_bits[:, p])) for p in range(n))
    pattern_ids = None
    if patterns is not None:
        pattern_ids = tuple(int(x) for x in patterns[kept])
    return RunStats(
        rounds_used=rounds,
        test_rounds=int(test_mask.sum()),
        aborted=False,
        sifted_bits=sifted,
        dropped_rounds=dropped,
        empirical_key_rate=sifted / rounds,
        empirical_qber=qber,
        keys_agree=bool(np.all(agree_rows)) if sifted else True,
        keys=keys,
        eve_pattern_ids=pattern_ids,
    )


def run_protocol2(config: ProtocolConfig, transcript: Optional[str] = None) -> RunStats:
    """Pairwise keys between A1 and each A_j, combined by XOR broadcasts."""
    if config.protocol != 2:
        raise ProtocolError("config.protocol must be 2")
    n = config.n_parties
    params = hardy_params(n)
    settings, patterns = _sample_settings(config, n)
    outcome_idx = _sample_outcomes(config, params, settings)
    rounds = config.n_rounds

    test_mask = stage_uniforms(config.seed, STAGE_TEST, rounds) < config.test_fraction
    ok, reason = _eavesdropping_check(
        params, settings, outcome_idx, test_mask, config.eps1, config.eps2
    )
    if not ok:
        return RunStats(
            rounds_used=rounds,
            test_rounds=int(test_mask.sum()),
            aborted=True,
            sifted_bits=0,
            dropped_rounds=0,
            empirical_key_rate=0.0,
            empirical_qber=0.0,
            keys_agree=False,
            keys=tuple("" for _ in range(n)),
            abort_reason=reason,
        )

    drop_keep = _effective_drop(params, config.base_setting0)
    plus_bit = lambda p: ((outcome_idx >> (n - 1 - p)) & 1) == 0
    a1_plus = plus_bit(0)
    pair_keys_a1 = []
    pair_keys_other = []
    pair_kept_first = None
    dropped = 0
    max_qber = 0.0
    for j in range(1, n):
        both_plus = a1_plus & plus_bit(j) & ~test_mask
        u_drop = stage_uniforms(config.seed, STAGE_DROP + j, rounds)
        a1_one = settings[:, 0] == 1
        kept = both_plus & (~a1_one | (u_drop < drop_keep))
        if pair_kept_first is None:
            pair_kept_first = kept
        dropped += int(np.count_nonzero(both_plus & a1_one & (u_drop >= drop_keep)))
        bits_a1 = settings[kept, 0]
        bits_j = settings[kept, j]
        if bits_a1.size:
            max_qber = max(max_qber, float(np.mean(bits_a1 != bits_j)))
        pair_keys_a1.append(bits_a1)
        pair_keys_other.append(bits_j)

    if transcript is not None:
        _write_transcript(transcript, settings, outcome_idx, pair_kept_first, n)
    length = min(b.size for b in pair_keys_a1)
    conference = pair_keys_a1[0][:length]
    keys = ["".join(map(str, conference))]
    agree = True
    for jj in range(1, n - 1):
        # A1 broadcasts K_{A1A2} xor K_{A1A(j+1)}; A_{j+1} recovers K_{A1A2}
        broadcast = conference ^ pair_keys_a1[jj][:length]
        recovered = broadcast ^ pair_keys_other[jj][:length]
        keys.append("".join(map(str, recovered)))
        agree = agree and bool(np.all(recovered == pair_keys_other[0][:length]))
    # A2 holds its own pairwise bits directly
    keys.insert(1, "".join(map(str, pair_keys_other[0][:length])))
    agree = agree and bool(np.all(pair_keys_other[0][:length] == conference))

    return RunStats(
        rounds_used=rounds,
        test_rounds=int(test_mask.sum()),
        aborted=False,
        sifted_bits=int(length),
        dropped_rounds=dropped,
        empirical_key_rate=length / rounds,
        empirical_qber=max_qber,
        keys_agree=agree,
        keys=tuple(keys),
        eve_pattern_ids=None,
    )


def run(config: ProtocolConfig, transcript: Optional[str] = None) -> RunStats:
    if config.protocol == 1:
        return run_protocol1(config, transcript=transcript)
    return run_protocol2(config, transcript=transcript)


def eve_input_guess(stats_: RunStats, bias: BiasModel, params: Optional[HardyParams] = None) -> float:
    """Empirical success rate of Eve guessing key bits from pattern ids.

    Requires a protocol-1 run executed with a BiasModel. Eve knows the
    active pattern per round and guesses the likelier key bit; the rate
    converges to :func:`hardy_dicka.keyrate.hardy_biased_guess`.
    """
    if stats_.eve_pattern_ids is None:
        raise ProtocolError("run carries no pattern ids; execute with a BiasModel")
    if params is None:
        params = hardy_params(3)
    from .keyrate import SIGN_PATTERNS, biased_setting_distribution

    q = params.p_max
    q_tilde = params.all_one_success
    guesses = []
    for pattern in SIGN_PATTERNS:
        dist = biased_setting_distribution(bias, pattern)
        w0 = q * dist[(0, 0, 0)]
        w1 = q_tilde * dist[(1, 1, 1)]
        guesses.append(0 if w0 >= w1 else 1)
    key_bits = np.array([int(b) for b in stats_.keys[0]], dtype=np.int8)
    pattern_arr = np.array(stats_.eve_pattern_ids, dtype=np.int64)
    # pattern id bit p selects the sign of party p; map id -> SIGN_PATTERNS index
    eve_bits = np.array([guesses[pid] for pid in pattern_arr], dtype=np.int8)
    if key_bits.size == 0:
        return 0.5
    return float(np.mean(eve_bits == key_bits))
