"""Noncommutative-moment relaxation engine for the Hardy key-sharing bounds.

Each party carries two dichotomic observables, Z (setting 0) and X
(setting 1); an optional eavesdropper adds a single commuting dichotomic
observable E. Words are tuples of per-slot reduced strings (slots commute,
O^2 = 1 within a slot). A moment matrix over a generating set of words,
one shared variable per canonical word class {w, reverse(w)}, defines the
semidefinite relaxations; objectives and constraints compile to linear
functionals of the moment variables.

Exact zero-probability constraints are handled facially: if <Pi> = 0 and
the moment matrix is PSD, the column combination Pi annihilates the state,
so M(y) c = 0 for the projector's coefficient vector c (and its E-dressed
copy). Those equalities are imposed and the PSD block is restricted to the
orthogonal complement, which restores an interior for the path-following
solver.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .hardy import HardyParams, build_hardy_state, hardy_params, setting_basis
from .keyrate import BellExpression, NoiseParams
from .qstate import Ket
from . import sdp

SIZE_CAP_ENV = "HARDY_DICKA_MAX_SDP_DIM"
DEFAULT_SIZE_CAP = 320
EVE_LETTER = "E"
Word = Tuple[str, ...]


class NpaError(ValueError):
    """Raised for malformed scenarios, words, or oversized generating sets."""


# ---------------------------------------------------------------------------
# scenario and word algebra


@dataclass(frozen=True)
class Scenario:
    """N parties with observables Z, X each; optionally one Eve observable."""

    n_parties: int
    include_eve: bool = False

    def __post_init__(self):
        if self.n_parties < 1:
            raise NpaError("need at least one party")

    @property
    def n_slots(self) -> int:
        return self.n_parties + (1 if self.include_eve else 0)

    @property
    def eve_slot(self) -> Optional[int]:
        return self.n_parties if self.include_eve else None

    def identity(self) -> Word:
        return ("",) * self.n_slots

    def letters(self, slot: int) -> str:
        if self.include_eve and slot == self.n_parties:
            return EVE_LETTER
        return "ZX"

    def single(self, party: int, setting: int) -> Word:
        w = [""] * self.n_slots
        w[party] = "ZX"[setting]
        return tuple(w)

    def eve_word(self) -> Word:
        if not self.include_eve:
            raise NpaError("scenario has no eavesdropper slot")
        w = [""] * self.n_slots
        w[-1] = EVE_LETTER
        return tuple(w)


def reduce_string(s: str) -> str:
    """Collapse adjacent equal letters (O^2 = 1); idempotent."""
    out: List[str] = []
    for ch in s:
        if out and out[-1] == ch:
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def word_mul(u: Word, v: Word) -> Word:
    return tuple(reduce_string(a + b) for a, b in zip(u, v))


def word_adjoint(u: Word) -> Word:
    # letters are self-adjoint, slots commute: reverse each slot string
    return tuple(a[::-1] for a in u)


def word_canonical(u: Word) -> Word:
    """Representative of the class {u, u^dagger} shared by one real moment."""
    v = word_adjoint(u)
    return u if u <= v else v


def word_length(u: Word) -> int:
    return sum(len(a) for a in u)


def generate_monomials(
    scenario: Scenario, level: int, extra: Iterable[Word] = ()
) -> Tuple[Word, ...]:
    """All reduced words of total length <= level, unioned with ``extra``.

    Ordering is deterministic: by total length, then lexicographic. The
    result size is capped by the HARDY_DICKA_MAX_SDP_DIM environment
    variable (default 320).
    """
    if level < 1:
        raise NpaError(f"level must be >= 1, got {level}")
    words = {scenario.identity()}
    frontier = {scenario.identity()}
    for _ in range(level):
        grown = set()
        for w in frontier:
            for slot in range(scenario.n_slots):
                for ch in scenario.letters(slot):
                    s = reduce_string(w[slot] + ch)
                    if len(s) <= len(w[slot]):
                        continue
                    grown.add(w[:slot] + (s,) + w[slot + 1 :])
        words |= grown
        frontier = grown
    for w in extra:
        if len(w) != scenario.n_slots:
            raise NpaError(f"extra word {w!r} has wrong slot count")
        words.add(tuple(reduce_string(s) for s in w))
    cap = int(os.environ.get(SIZE_CAP_ENV, DEFAULT_SIZE_CAP))
    if len(words) > cap:
        raise NpaError(
            f"generating set of {len(words)} words exceeds the cap of {cap} "
            f"(set {SIZE_CAP_ENV} to raise it)"
        )
    return tuple(sorted(words, key=lambda w: (word_length(w), w)))


def closure_words(words: Iterable[Word]) -> List[Word]:
    """Balanced factor pairs so each word appears as u^dagger v.

    For word w split every slot string at its midpoint: u takes the
    reversed prefixes, v the suffixes; then u^dagger v = w exactly.
    """
    out: List[Word] = []
    for w in words:
        u, v = [], []
        for s in w:
            k = len(s) // 2
            u.append(s[:k][::-1])
            v.append(s[k:])
        out.extend([tuple(u), tuple(v)])
    return out


# ---------------------------------------------------------------------------
# moment matrix


@dataclass(frozen=True)
class MomentMatrix:
    """Moment matrix structure over a generating set of words."""

    scenario: Scenario
    words: Tuple[Word, ...]
    var_words: Tuple[Word, ...]
    index: Dict[Word, int] = field(repr=False)
    entries: Tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)
    identity_entries: Tuple[np.ndarray, np.ndarray] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.words)

    @property
    def n_vars(self) -> int:
        return len(self.var_words)

    def row_of(self, w: Word) -> int:
        try:
            return self.words.index(w)
        except ValueError:
            raise NpaError(f"word {w!r} not in the generating set")

    def f0(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        r, c = self.identity_entries
        m[r, c] = 1.0
        m[c, r] = 1.0
        return m


def build_moment_matrix(scenario: Scenario, words: Sequence[Word]) -> MomentMatrix:
    """Assign one variable to each canonical word class u^dagger v."""
    words = tuple(words)
    ident = scenario.identity()
    index: Dict[Word, int] = {}
    var_words: List[Word] = []
    var_l: List[int] = []
    row_l: List[int] = []
    col_l: List[int] = []
    id_rows: List[int] = []
    id_cols: List[int] = []
    adjoints = [word_adjoint(u) for u in words]
    for i, u_adj in enumerate(adjoints):
        for j in range(i, len(words)):
            w = word_canonical(word_mul(u_adj, words[j]))
            if w == ident:
                id_rows.append(i)
                id_cols.append(j)
                continue
            k = index.get(w)
            if k is None:
                k = len(var_words)
                index[w] = k
                var_words.append(w)
            var_l.append(k)
            row_l.append(i)
            col_l.append(j)
    return MomentMatrix(
        scenario=scenario,
        words=words,
        var_words=tuple(var_words),
        index=index,
        entries=(
            np.array(var_l, dtype=np.int64),
            np.array(row_l, dtype=np.int64),
            np.array(col_l, dtype=np.int64),
        ),
        identity_entries=(
            np.array(id_rows, dtype=np.int64),
            np.array(id_cols, dtype=np.int64),
        ),
    )


# ---------------------------------------------------------------------------
# linear functionals of the moment variables


@dataclass
class LinearFunctional:
    """const + coeffs . y over the moment variables of one matrix."""

    const: float
    coeffs: np.ndarray

    def evaluate(self, y: np.ndarray) -> float:
        return float(self.const + self.coeffs @ y)

    def __add__(self, other: "LinearFunctional") -> "LinearFunctional":
        return LinearFunctional(self.const + other.const, self.coeffs + other.coeffs)

    def scaled(self, factor: float) -> "LinearFunctional":
        return LinearFunctional(self.const * factor, self.coeffs * factor)


def _accumulate(mm: MomentMatrix, func: LinearFunctional, word: Word, coeff: float):
    cw = word_canonical(word)
    if cw == mm.scenario.identity():
        func.const += coeff
        return
    k = mm.index.get(cw)
    if k is None:
        raise NpaError(
            f"moment of {cw!r} is outside the span; extend the generating set"
        )
    func.coeffs[k] += coeff


def _event_words(
    scenario: Scenario,
    parties: Sequence[int],
    settings: Sequence[int],
    outcomes: Sequence[int],
    eve_outcome: Optional[int],
):
    """Terms of prod (1 + o_p O_p)/2 (x) optional (1 + e E)/2."""
    slots: List[Tuple[int, str, int]] = []
    for p, s, o in zip(parties, settings, outcomes):
        if o not in (1, -1):
            raise NpaError(f"outcomes are +1/-1, got {o}")
        slots.append((p, "ZX"[s], o))
    if eve_outcome is not None:
        if not scenario.include_eve:
            raise NpaError("scenario has no eavesdropper slot")
        slots.append((scenario.n_slots - 1, EVE_LETTER, eve_outcome))
    k = len(slots)
    for mask in product((0, 1), repeat=k):
        w = [""] * scenario.n_slots
        sign = 1.0
        for take, (slot, letter, outcome) in zip(mask, slots):
            if take:
                w[slot] = letter
                sign *= outcome
        yield tuple(w), sign / 2**k


def compile_probability(
    mm: MomentMatrix,
    parties: Sequence[int],
    settings: Sequence[int],
    outcomes: Sequence[int],
    eve_outcome: Optional[int] = None,
) -> LinearFunctional:
    """Joint outcome probability as a functional of the moments."""
    if not (len(parties) == len(settings) == len(outcomes)):
        raise NpaError("parties, settings and outcomes must have equal length")
    func = LinearFunctional(0.0, np.zeros(mm.n_vars))
    for word, coeff in _event_words(mm.scenario, parties, settings, outcomes, eve_outcome):
        _accumulate(mm, func, word, coeff)
    return func


def compile_correlator(
    mm: MomentMatrix, parties: Sequence[int], settings: Sequence[int]
) -> LinearFunctional:
    """Expectation of the product of the chosen observables."""
    w = [""] * mm.scenario.n_slots
    for p, s in zip(parties, settings):
        if w[p]:
            raise NpaError(f"party {p} listed twice")
        w[p] = "ZX"[s]
    func = LinearFunctional(0.0, np.zeros(mm.n_vars))
    _accumulate(mm, func, tuple(w), 1.0)
    return func


def compile_bell_expression(mm: MomentMatrix, expr: BellExpression) -> LinearFunctional:
    """A keyrate.BellExpression as a functional of the moments."""
    func = LinearFunctional(0.0, np.zeros(mm.n_vars))
    for (parties, settings), coeff in expr.coefficients:
        part = compile_correlator(mm, parties, settings)
        func = func + part.scaled(coeff)
    return func


def projector_vector(
    mm: MomentMatrix,
    parties: Sequence[int],
    settings: Sequence[int],
    outcomes: Sequence[int],
) -> np.ndarray:
    """Coefficients of the event projector over the generating set.

    Requires every expansion word to be a generating word, so that
    <Pi> = c^T M c and <Pi> = 0 forces M c = 0.
    """
    pos = {w: i for i, w in enumerate(mm.words)}
    vec = np.zeros(mm.dim)
    for word, coeff in _event_words(mm.scenario, parties, settings, outcomes, None):
        i = pos.get(word)
        if i is None:
            raise NpaError(
                f"projector word {word!r} missing from the generating set"
            )
        vec[i] += coeff
    return vec


def kernel_equalities(mm: MomentMatrix, cvec: np.ndarray):
    """Rows of M(y) c = 0 as (a, b) equality constraints on the moments."""
    n, m = mm.dim, mm.n_vars
    var, row, col = mm.entries
    id_r, id_c = mm.identity_entries
    consts = np.zeros(n)
    np.add.at(consts, id_r, cvec[id_c])
    off = id_r != id_c
    np.add.at(consts, id_c[off], cvec[id_r[off]])
    mats: List[Dict[int, float]] = [dict() for _ in range(n)]
    for k, i, j in zip(var, row, col):
        mats[i][k] = mats[i].get(k, 0.0) + cvec[j]
        if i != j:
            mats[j][k] = mats[j].get(k, 0.0) + cvec[i]
    out = []
    for i in range(n):
        if not mats[i] and consts[i] == 0.0:
            continue
        a = np.zeros(m)
        for k, v in mats[i].items():
            a[k] = v
        out.append((a, -consts[i]))
    return out


def facial_basis(mm: MomentMatrix, kernel_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Orthonormal basis of the complement of the forced kernel span."""
    k = np.array(kernel_vectors).T
    u, s, _ = np.linalg.svd(k, full_matrices=True)
    rank = int(np.sum(s > 1e-10))
    return u[:, rank:]


def dress_with_eve(mm: MomentMatrix, cvec: np.ndarray) -> np.ndarray:
    """Coefficient vector of (projector . E) over the generating set."""
    pos = {w: i for i, w in enumerate(mm.words)}
    out = np.zeros(mm.dim)
    eve = mm.scenario.eve_word()
    for i in np.nonzero(cvec)[0]:
        we = word_mul(mm.words[i], eve)
        j = pos.get(we)
        if j is None:
            raise NpaError(f"E-dressed word {we!r} missing from the generating set")
        out[j] += cvec[i]
    return out


def assemble_problem(
    mm: MomentMatrix,
    objective: LinearFunctional,
    sense: str,
    eq_constraints=(),
    ineq_constraints=(),
    reduction: Optional[np.ndarray] = None,
) -> sdp.SdpProblem:
    var, row, col = mm.entries
    return sdp.SdpProblem(
        n_vars=mm.n_vars,
        objective=objective.coeffs,
        f0=mm.f0(),
        basis=(var, row, col, np.ones(len(var))),
        eq_constraints=tuple(eq_constraints),
        ineq_constraints=tuple(ineq_constraints),
        sense=sense,
        objective_const=objective.const,
        reduction=reduction,
    )


# ---------------------------------------------------------------------------
# explicit realizations -> moment vectors


def hardy_observables(params: HardyParams, second_setting: str = "alpha"):
    """Per-party 2x2 observables (Z-like, X-like) of the reference point.

    ``second_setting`` selects the X-like observable: "alpha" gives the
    Hardy measurement at angle alpha (the feasible realization), "pauli"
    gives sigma_x (the swap-circuit frame in which the isometry is exact).
    """
    z = np.diag([1.0, -1.0]).astype(complex)
    if second_setting == "alpha":
        basis = setting_basis(params, 1)
        x = basis[:, [0]] @ basis[:, [0]].conj().T - basis[:, [1]] @ basis[:, [1]].conj().T
    elif second_setting == "pauli":
        x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    else:
        raise NpaError(f"unknown frame {second_setting!r}")
    return [(z, x)] * params.n


def moment_vector(
    mm: MomentMatrix,
    state: Ket,
    observables: Sequence[Tuple[np.ndarray, np.ndarray]],
    eve_expectation: float = 1.0,
) -> np.ndarray:
    """Moments of every variable word on an explicit qubit realization.

    Eve is modelled as an uncorrelated sign: a word with k E letters picks
    up eve_expectation^k (E^2 = 1 leaves k in {0, 1} after reduction).
    """
    n = state.n_qubits
    scenario = mm.scenario
    if scenario.n_parties != n:
        raise NpaError("state size does not match the scenario")
    y = np.zeros(mm.n_vars)
    for k, w in enumerate(mm.var_words):
        ops = []
        for p in range(n):
            op = np.eye(2, dtype=complex)
            for ch in w[p]:
                op = op @ (observables[p][0] if ch == "Z" else observables[p][1])
            ops.append(op)
        full = ops[0]
        for op in ops[1:]:
            full = np.kron(full, op)
        val = complex(np.vdot(state.amps, full @ state.amps))
        if scenario.include_eve and w[-1] == EVE_LETTER:
            val *= eve_expectation
        # real moment matrix: the variable carries Re of the class moment
        y[k] = val.real
    return y


# ---------------------------------------------------------------------------
# Hardy constraint sets


def hardy_zero_events(n: int = 3, implied_mixed: bool = True):
    """The cyclic and all-minus zero events, plus the implied mixed zeros.

    Exact Hardy conditions force P(+..+) = 0 for every non-constant
    setting tuple; the noisy analysis bounds those six mixed events by
    eps2 as well (the error term of the QBER bound counts them).
    """
    events = []
    for i in range(n):
        j = (i + 1) % n
        events.append(((i, j), (1, 0), (1, 1)))
    events.append((tuple(range(n)), (1,) * n, (-1,) * n))
    if implied_mixed:
        for s in product((0, 1), repeat=n):
            if s != (0,) * n and s != (1,) * n:
                events.append((tuple(range(n)), s, (1,) * n))
    return events


def _hardy_generating_set(scenario: Scenario, level: int) -> Tuple[Word, ...]:
    """Party words of length <= level with all single-letter triples,
    each with and without the Eve letter when the scenario has one."""
    party = Scenario(scenario.n_parties, include_eve=False)
    extra = []
    for trip in product("ZX", repeat=scenario.n_parties):
        extra.append(tuple(trip))
    base = generate_monomials(party, level, extra=extra)
    if not scenario.include_eve:
        return base
    words: List[Word] = []
    for w in base:
        words.append(w + ("",))
        words.append(w + (EVE_LETTER,))
    return tuple(sorted(words, key=lambda w: (word_length(w), w)))


def _hardy_constraints(
    mm: MomentMatrix, params: HardyParams, noise: NoiseParams, pin_all_one: bool
):
    """Equalities, inequalities and facial reduction for the noisy set."""
    eps1, eps2 = noise.eps1, noise.eps2
    if eps1 >= params.p_max:
        raise NpaError(f"eps1 = {eps1} must stay below p_max = {params.p_max:.8f}")
    n = params.n
    eqs = []
    ineqs = []
    func = compile_probability(mm, range(n), (0,) * n, (1,) * n)
    eqs.append((func.coeffs, params.p_max - eps1 - func.const))
    if pin_all_one:
        # observed all-setting-1 success, scaled with the same relative
        # deviation as the all-setting-0 success; fixes the dropping ratio
        target = params.all_one_success * (1.0 - eps1 / params.p_max)
        func = compile_probability(mm, range(n), (1,) * n, (1,) * n)
        eqs.append((func.coeffs, target - func.const))
    reduction = None
    if eps2 == 0.0:
        kernel_vecs = []
        for parties, settings, outcomes in hardy_zero_events(n):
            cvec = projector_vector(mm, parties, settings, outcomes)
            kernel_vecs.append(cvec)
            if mm.scenario.include_eve:
                kernel_vecs.append(dress_with_eve(mm, cvec))
            eqs.extend(kernel_equalities(mm, cvec))
        reduction = facial_basis(mm, kernel_vecs)
    else:
        for parties, settings, outcomes in hardy_zero_events(n):
            func = compile_probability(mm, parties, settings, outcomes)
            ineqs.append((func.coeffs, eps2 - func.const))
    return eqs, ineqs, reduction


def merit_trivial_benchmark() -> float:
    """Merit of outcome-flipping devices: every P(a|A,phi) equals 1/2."""
    return 0.5 * (4 * 0.5) - 1.0


def _probability_range_check(mm: MomentMatrix, y: np.ndarray, tol: float = 1e-7):
    """Worst violation of [0, 1] over the Hardy event probabilities."""
    n = mm.scenario.n_parties
    worst = 0.0
    events = [((tuple(range(n))), (0,) * n, (1,) * n)]
    events += hardy_zero_events(n)
    for parties, settings, outcomes in events:
        val = compile_probability(mm, parties, settings, outcomes).evaluate(y)
        worst = max(worst, -val, val - 1.0)
    return worst <= tol, worst


def _record(objective_id, level, constraints, sol, mm) -> dict:
    in_range, violation = _probability_range_check(mm, sol.y)
    return {
        "objective_id": objective_id,
        "level": level,
        "constraints": constraints,
        "bound": sol.value,
        "duality_gap": sol.duality_gap,
        "matrix_dim": mm.dim,
        "iterations": sol.iterations,
        "status": sol.status,
        "probabilities_in_range": bool(in_range),
        "max_probability_violation": float(violation),
        "wall_time_ms": sol.wall_time_ms,
    }


# ---------------------------------------------------------------------------
# device-independent bounds


def guessing_probability(
    noise: NoiseParams,
    level: int = 2,
    tol: float = 1e-9,
    max_iter: int = 300,
    record_sink: Optional[list] = None,
) -> float:
    """Upper bound on Eve's probability of guessing the key-setting bit.

    Maximizes the per-round success of a binary Eve measurement aligned
    with the two key events, normalized by the key-generation probability,
    over the level-``level`` relaxation of the noisy Hardy constraints.
    """
    params = hardy_params(3)
    scenario = Scenario(3, include_eve=True)
    mm = build_moment_matrix(scenario, _hardy_generating_set(scenario, level))
    eqs, ineqs, reduction = _hardy_constraints(mm, params, noise, pin_all_one=True)

    drop = params.t_r**3
    zzz = compile_probability(mm, (0, 1, 2), (0, 0, 0), (1, 1, 1), eve_outcome=1)
    xxx = compile_probability(mm, (0, 1, 2), (1, 1, 1), (1, 1, 1), eve_outcome=-1)
    objective = (zzz + xxx.scaled(drop)).scaled(1.0 / (2.0 * (params.p_max - noise.eps1)))

    problem = assemble_problem(mm, objective, "max", eqs, ineqs, reduction)
    sol = sdp.solve(problem, tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        raise NpaError(
            "noisy Hardy constraint set is infeasible; check eps1 < p_max "
            "and the tolerance pair"
        )
    if record_sink is not None:
        record_sink.append(
            _record("guessing_probability", level,
                    {"eps1": noise.eps1, "eps2": noise.eps2}, sol, mm)
        )
    return float(sol.value)


def bell_guess(
    expr: BellExpression,
    beta: float,
    key_setting: int = 0,
    level: int = 2,
    tol: float = 1e-9,
    max_iter: int = 300,
    record_sink: Optional[list] = None,
) -> float:
    """Bound on Eve guessing A1's outcome given a Bell expectation value.

    Maximizes P(A1 = E | key_setting) subject to the (possibly
    bias-weighted) Bell expression equalling ``beta``.
    """
    scenario = Scenario(3, include_eve=True)
    mm = build_moment_matrix(scenario, _hardy_generating_set(scenario, level))
    bell = compile_bell_expression(mm, expr)
    eqs = [(bell.coeffs, beta - bell.const)]
    agree = compile_probability(mm, (0,), (key_setting,), (1,), eve_outcome=1)
    agree = agree + compile_probability(mm, (0,), (key_setting,), (-1,), eve_outcome=-1)
    problem = assemble_problem(mm, agree, "max", eqs, ())
    sol = sdp.solve(problem, tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        raise NpaError(
            f"Bell value {beta} is unreachable at relaxation level {level}"
        )
    if record_sink is not None:
        record_sink.append(
            _record(f"bell_guess[{expr.name}]", level,
                    {"beta": beta, "key_setting": key_setting}, sol, mm)
        )
    return float(sol.value)


# ---------------------------------------------------------------------------
# swap-isometry objectives (single-party operator polynomials)


def _poly_mul(a: Dict[str, float], b: Dict[str, float]) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for wa, ca in a.items():
        for wb, cb in b.items():
            w = reduce_string(wa + wb)
            out[w] = out.get(w, 0.0) + ca * cb
    return {w: c for w, c in out.items() if c != 0.0}


def _swap_extraction_polys() -> Dict[Tuple[int, int], Dict[str, float]]:
    """Per-party words of (1+Z)^(1-l) ((1-Z)X)^l (1+Z)^(1-i) (X(1-Z))^i / 4."""
    plus = {"": 1.0, "Z": 1.0}
    left = {"X": 1.0, "ZX": -1.0}   # (1 - Z) X
    right = {"X": 1.0, "XZ": -1.0}  # X (1 - Z)
    polys = {}
    for i in (0, 1):
        for l in (0, 1):
            m = _poly_mul(left if l else plus, right if i else plus)
            polys[(i, l)] = {w: c / 4.0 for w, c in m.items()}
    return polys


def fidelity_functional(mm: MomentMatrix, params: HardyParams) -> LinearFunctional:
    """Overlap of the swapped state with the tripartite Hardy state.

    The swapped state's matrix elements are moments of products of the
    per-party extraction operators; contracting both indices with the
    reference amplitudes gives a linear combination of moments that equals
    <psi| rho_swap |psi>.
    """
    if params.n != 3:
        raise NpaError("the swap objectives are built for three parties")
    state = build_hardy_state(params)
    amps = state.amps.real
    polys = _swap_extraction_polys()
    func = LinearFunctional(0.0, np.zeros(mm.n_vars))
    for ket in range(8):
        for bra in range(8):
            weight = float(amps[ket] * amps[bra])
            if weight == 0.0:
                continue
            per_party = []
            for p in range(3):
                i = (ket >> (2 - p)) & 1
                l = (bra >> (2 - p)) & 1
                per_party.append(polys[(i, l)])
            for w1, c1 in per_party[0].items():
                for w2, c2 in per_party[1].items():
                    for w3, c3 in per_party[2].items():
                        _accumulate(mm, func, (w1, w2, w3), weight * c1 * c2 * c3)
    return func


def merit_functional(mm: MomentMatrix) -> LinearFunctional:
    """Measurement figure of merit for party A1 (equals 1 for the
    reference swap-frame measurements, 0 for trivial ones)."""
    one = {"": 1.0}
    zp = {"": 0.5, "Z": 0.5}
    zm = {"": 0.5, "Z": -0.5}
    xp = {"": 0.5, "X": 0.5}
    xm = {"": 0.5, "X": -0.5}
    x = {"X": 1.0}
    z = {"Z": 1.0}

    def chain(*factors):
        out = one
        for f in factors:
            out = _poly_mul(out, f)
        return out

    terms = [
        # P(0 | setting 0, |0>)
        [zp, chain(zm, x, zp, x, zm)],
        # P(1 | setting 0, |1>)
        [chain(x, zm, x), chain(x, zp, x, zm, x, zp, x)],
        # P(0 | setting 1, |+>)
        [xp, chain(xm, z, xp, z, xm)],
        # P(1 | setting 1, |->)
        [chain(z, xp, z), chain(z, xm, z, xp, z, xm, z)],
    ]
    func = LinearFunctional(-1.0, np.zeros(mm.n_vars))
    for group in terms:
        for poly in group:
            for w, c in poly.items():
                _accumulate(mm, func, (w, "", ""), 0.5 * c)
    return func


def _swap_generating_set(scenario: Scenario, level: int, objective_words):
    extra = list(closure_words(objective_words))
    for trip in product("ZX", repeat=scenario.n_parties):
        extra.append(tuple(trip))
    return generate_monomials(scenario, level, extra=extra)


def _fidelity_objective_words() -> List[Word]:
    polys = _swap_extraction_polys()
    words = set()
    for p1 in polys.values():
        for p2 in polys.values():
            for p3 in polys.values():
                for w1 in p1:
                    for w2 in p2:
                        for w3 in p3:
                            words.add((w1, w2, w3))
    return sorted(words, key=lambda w: (word_length(w), w))


def _merit_objective_words() -> List[Word]:
    words = {("", "", "")}
    one = {"": 1.0}
    zp = {"": 0.5, "Z": 0.5}
    zm = {"": 0.5, "Z": -0.5}
    xp = {"": 0.5, "X": 0.5}
    xm = {"": 0.5, "X": -0.5}
    x = {"X": 1.0}
    z = {"Z": 1.0}

    def chain(*factors):
        out = one
        for f in factors:
            out = _poly_mul(out, f)
        return out

    for poly in (
        zp, chain(zm, x, zp, x, zm),
        chain(x, zm, x), chain(x, zp, x, zm, x, zp, x),
        xp, chain(xm, z, xp, z, xm),
        chain(z, xp, z), chain(z, xm, z, xp, z, xm, z),
    ):
        for w in poly:
            words.add((w, "", ""))
    return sorted(words, key=lambda w: (word_length(w), w))


def fidelity_bound(
    noise: NoiseParams,
    level: int = 3,
    tol: float = 1e-9,
    max_iter: int = 300,
    record_sink: Optional[list] = None,
) -> float:
    """Lower bound on the worst-case swap fidelity with the Hardy state."""
    params = hardy_params(3)
    scenario = Scenario(3, include_eve=False)
    words = _swap_generating_set(scenario, level, _fidelity_objective_words())
    mm = build_moment_matrix(scenario, words)
    eqs, ineqs, reduction = _hardy_constraints(mm, params, noise, pin_all_one=False)
    objective = fidelity_functional(mm, params)
    problem = assemble_problem(mm, objective, "min", eqs, ineqs, reduction)
    sol = sdp.solve(problem, tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        raise NpaError("noisy Hardy constraint set is infeasible")
    if record_sink is not None:
        record_sink.append(
            _record("fidelity", level, {"eps1": noise.eps1, "eps2": noise.eps2}, sol, mm)
        )
    return float(sol.value)


def measurement_merit_bound(
    noise: NoiseParams,
    level: int = 3,
    tol: float = 1e-9,
    max_iter: int = 300,
    record_sink: Optional[list] = None,
) -> float:
    """Lower bound on the measurement figure of merit of party A1."""
    params = hardy_params(3)
    scenario = Scenario(3, include_eve=False)
    words = _swap_generating_set(scenario, level, _merit_objective_words())
    mm = build_moment_matrix(scenario, words)
    eqs, ineqs, reduction = _hardy_constraints(mm, params, noise, pin_all_one=False)
    objective = merit_functional(mm)
    problem = assemble_problem(mm, objective, "min", eqs, ineqs, reduction)
    sol = sdp.solve(problem, tol=tol, max_iter=max_iter)
    if sol.status == "infeasible":
        raise NpaError("noisy Hardy constraint set is infeasible")
    if record_sink is not None:
        record_sink.append(
            _record("measurement_merit", level,
                    {"eps1": noise.eps1, "eps2": noise.eps2}, sol, mm)
        )
    return float(sol.value)


def merit_value_operators(state: Ket, z_op: np.ndarray, x_op: np.ndarray) -> float:
    """Measurement merit of party A1 evaluated directly on 2x2 operators.

    Unlike the moment functional this places no algebraic assumption on
    the operators, so it also covers trivial measurements (both observables
    the zero operator), which give exactly 0.
    """
    eye = np.eye(2, dtype=complex)
    z = np.asarray(z_op, dtype=complex)
    x = np.asarray(x_op, dtype=complex)
    zp, zm = (eye + z) / 2, (eye - z) / 2
    xp, xm = (eye + x) / 2, (eye - x) / 2
    ops = [
        zp + zm @ x @ zp @ x @ zm,
        x @ zm @ x + x @ zp @ x @ zm @ x @ zp @ x,
        xp + xm @ z @ xp @ z @ xm,
        z @ xp @ z + z @ xm @ z @ xp @ z @ xm @ z,
    ]
    n = state.n_qubits
    total = 0.0
    for op in ops:
        full = op
        for _ in range(n - 1):
            full = np.kron(full, eye)
        total += float(np.real(np.vdot(state.amps, full @ state.amps)))
    return 0.5 * total - 1.0


# ---------------------------------------------------------------------------
# CHSH sanity bound


def chsh_bound(level: int = 1, tol: float = 1e-10, record_sink: Optional[list] = None) -> float:
    """Maximal CHSH value over the relaxation (Tsirelson: 2 sqrt 2)."""
    scenario = Scenario(2, include_eve=False)
    mm = build_moment_matrix(scenario, generate_monomials(scenario, level))
    func = compile_correlator(mm, (0, 1), (0, 0))
    func = func + compile_correlator(mm, (0, 1), (0, 1))
    func = func + compile_correlator(mm, (0, 1), (1, 0))
    func = func + compile_correlator(mm, (0, 1), (1, 1)).scaled(-1.0)
    problem = assemble_problem(mm, func, "max")
    sol = sdp.solve(problem, tol=tol)
    if record_sink is not None:
        record_sink.append(_record("chsh", level, {}, sol, mm))
    return float(sol.value)
