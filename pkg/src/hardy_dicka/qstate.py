"""Dense linear algebra for few-qubit pure states and entanglement monotones.

Qubit 0 is the leftmost tensor factor; amplitudes are stored row-major, so
basis index ``i`` corresponds to the bitstring of ``i`` read left to right.
Everything here is a pure function of immutable values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NORM_ATOL = 1e-12
PROJECTOR_ATOL = 1e-9


class QStateError(ValueError):
    """Raised for malformed states, partitions or projectors."""


@dataclass(frozen=True)
class Ket:
    """Normalized pure state of ``n_qubits`` qubits.

    Parameters
    ----------
    n_qubits : int
        Number of qubits, at least 1.
    amps : numpy.ndarray
        Complex vector of length ``2**n_qubits``. Normalized on construction;
        a vector whose norm differs from 1 by more than ``NORM_ATOL`` is
        rescaled, a zero vector is rejected.
    """

    n_qubits: int
    amps: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise QStateError(f"n_qubits must be >= 1, got {self.n_qubits}")
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        if amps.shape[0] != 2**self.n_qubits:
            raise QStateError(
                f"amplitude vector has length {amps.shape[0]}, "
                f"expected {2**self.n_qubits}"
            )
        norm = np.linalg.norm(amps)
        if norm == 0.0:
            raise QStateError("zero amplitude vector")
        if abs(norm - 1.0) > NORM_ATOL:
            amps = amps / norm
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "Ket":
        """Computational basis state |index> of ``n_qubits`` qubits."""
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def ghz(cls, n_qubits: int) -> "Ket":
        """(|0...0> + |1...1>)/sqrt(2)."""
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = amps[-1] = 1.0 / np.sqrt(2.0)
        return cls(n_qubits, amps)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix."""

    dim: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (self.dim, self.dim):
            raise QStateError(f"expected shape {(self.dim, self.dim)}, got {entries.shape}")
        if np.max(np.abs(entries - entries.conj().T)) > 1e-12:
            raise QStateError("density matrix is not Hermitian within 1e-12")
        if abs(np.trace(entries).real - 1.0) > 1e-12:
            raise QStateError("density matrix trace differs from 1 by more than 1e-12")
        if np.linalg.eigvalsh(entries).min() < -1e-10:
            raise QStateError("density matrix has an eigenvalue below -1e-10")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def eigenvalues(self) -> np.ndarray:
        """Real eigenvalues in ascending order, clipped to [0, 1]."""
        return np.clip(np.linalg.eigvalsh(self.entries), 0.0, 1.0)


@dataclass(frozen=True)
class Bipartition:
    """Bipartition of qubit indices; ``subset_a`` is the kept ("1") side."""

    subset_a: frozenset

    def __init__(self, subset_a: Iterable[int]):
        object.__setattr__(self, "subset_a", frozenset(int(q) for q in subset_a))
        if not self.subset_a:
            raise QStateError("subset_a must be nonempty")

    def validate(self, n_qubits: int) -> None:
        if any(q < 0 or q >= n_qubits for q in self.subset_a):
            raise QStateError(f"qubit index out of range for {n_qubits} qubits")
        if len(self.subset_a) >= n_qubits:
            raise QStateError("subset_a must be a proper subset of the qubits")


@dataclass(frozen=True)
class EntanglementRecord:
    """Monotones of a pure state across one bipartition (entropies in bits)."""

    concurrence: float
    negativity: float
    log_negativity: float
    entanglement_entropy: float
    renyi_entropy: float
    renyi_order: float


def tensor(a: Ket, b: Ket) -> Ket:
    """Tensor product a (x) b; a's qubits come first."""
    return Ket(a.n_qubits + b.n_qubits, np.kron(a.amps, b.amps))


def partial_trace(state: Ket, keep: Bipartition) -> DensityMatrix:
    """Reduced density matrix of ``state`` on the qubits in ``keep``.

    The kept qubits appear in increasing index order in the result.
    """
    keep.validate(state.n_qubits)
    n = state.n_qubits
    kept = sorted(keep.subset_a)
    traced = [q for q in range(n) if q not in keep.subset_a]
    psi = state.amps.reshape([2] * n)
    psi = np.transpose(psi, kept + traced)
    a = psi.reshape(2 ** len(kept), 2 ** len(traced))
    rho = a @ a.conj().T
    return DensityMatrix(2 ** len(kept), rho)


def _check_projector(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=complex)
    if p.shape != (2, 2):
        raise QStateError(f"per-qubit projector must be 2x2, got {p.shape}")
    if np.max(np.abs(p @ p - p)) > PROJECTOR_ATOL:
        raise QStateError("projector is not idempotent within 1e-9")
    if np.max(np.abs(p - p.conj().T)) > PROJECTOR_ATOL:
        raise QStateError("projector is not Hermitian within 1e-9")
    return p


def born_prob(state: Ket, projectors: Sequence) -> float:
    """Born probability <psi| P_0 (x) ... (x) P_{n-1} |psi>.

    Parameters
    ----------
    state : Ket
    projectors : sequence
        One entry per qubit: a 2x2 rank-<=2 projector, or None for the
        identity (marginalised qubit).

    Returns
    -------
    float in [0, 1].
    """
    if len(projectors) != state.n_qubits:
        raise QStateError(
            f"got {len(projectors)} projectors for {state.n_qubits} qubits"
        )
    n = state.n_qubits
    psi = state.amps.reshape([2] * n)
    for q, p in enumerate(projectors):
        if p is None:
            continue
        p = _check_projector(p)
        psi = np.tensordot(p, psi, axes=([1], [q]))
        psi = np.moveaxis(psi, 0, q)
    val = np.vdot(state.amps, psi.reshape(-1)).real
    return float(min(max(val, 0.0), 1.0))


def _binary_entropy_bits(lams: np.ndarray) -> float:
    lams = lams[lams > 1e-15]
    return float(-np.sum(lams * np.log2(lams)))


def entanglement_monotones(
    state: Ket, cut: Bipartition, renyi_order: float = 0.5
) -> EntanglementRecord:
    """Entanglement monotones of a pure state across ``cut``.

    Concurrence is defined as 2*sqrt(det rho_A) and only for single-qubit
    cuts; larger cuts raise. Negativity and log-negativity use the partial
    transpose over ``cut.subset_a``. Entropies are in bits; the Renyi order
    defaults to 1/2, for which the Renyi entropy of a pure state equals its
    log-negativity.
    """
    cut.validate(state.n_qubits)
    rho_a = partial_trace(state, cut)
    lams = rho_a.eigenvalues()

    if len(cut.subset_a) == 1:
        det = float(np.linalg.det(rho_a.entries).real)
        concurrence = 2.0 * np.sqrt(max(det, 0.0))
    else:
        raise QStateError(
            "concurrence is only defined here for single-qubit cuts; "
            f"got |subset_a| = {len(cut.subset_a)}"
        )

    # pure state: ||rho^{T_A}||_1 = (sum_i sqrt(lambda_i))^2
    trace_norm = float(np.sum(np.sqrt(lams)) ** 2)
    negativity = (trace_norm - 1.0) / 2.0
    log_negativity = float(np.log2(trace_norm))
    entropy = _binary_entropy_bits(lams)
    q = float(renyi_order)
    if abs(q - 1.0) < 1e-12:
        renyi = entropy
    else:
        renyi = float(np.log2(np.sum(lams[lams > 1e-15] ** q)) / (1.0 - q))
    return EntanglementRecord(
        concurrence=float(concurrence),
        negativity=float(negativity),
        log_negativity=log_negativity,
        entanglement_entropy=entropy,
        renyi_entropy=renyi,
        renyi_order=q,
    )


def partial_transpose(state: Ket, cut: Bipartition) -> np.ndarray:
    """|psi><psi| partially transposed over ``cut.subset_a`` (dense)."""
    cut.validate(state.n_qubits)
    n = state.n_qubits
    rho = np.outer(state.amps, state.amps.conj())
    r = rho.reshape([2] * (2 * n))
    perm = list(range(2 * n))
    for q in cut.subset_a:
        perm[q], perm[n + q] = perm[n + q], perm[q]
    return np.transpose(r, perm).reshape(2**n, 2**n)


def ket_to_json(state: Ket) -> str:
    """Serialize a ket as a JSON array of [re, im] pairs."""
    pairs = [[float(a.real), float(a.imag)] for a in state.amps]
    return json.dumps({"n_qubits": state.n_qubits, "amps": pairs})


def ket_from_json(text: str) -> Ket:
    """Inverse of :func:`ket_to_json`."""
    obj = json.loads(text)
    amps = np.array([complex(re, im) for re, im in obj["amps"]])
    return Ket(int(obj["n_qubits"]), amps)
