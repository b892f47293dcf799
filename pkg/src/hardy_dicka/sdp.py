"""Small dense semidefinite-program solver.

Problem form: optimize a linear functional of y subject to
M(y) = F0 + sum_i y_i F_i >= 0 (one PSD block), linear equalities a.y = b
and inequalities a.y <= b. Equalities are eliminated by reparameterizing
onto their affine solution set; inequalities become 1x1 diagonal slack
entries of the PSD block. The core is an infeasible-start primal-dual
path-following iteration with the HKM direction and a Mehrotra
predictor-corrector step, solving the Schur system by dense Cholesky.

The PSD basis is stored sparsely: parallel arrays (var, row, col, val)
with each off-diagonal position listed once (its transpose is implied).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from threadpoolctl import threadpool_limits


class SdpError(ValueError):
    """Raised for malformed problem data."""


@dataclass(frozen=True)
class SdpProblem:
    """Linear objective over moment variables with one PSD block.

    ``basis`` holds the coefficient entries of sum_i y_i F_i as parallel
    arrays (var, row, col, val); entries with row < col are mirrored
    implicitly. ``f0`` is the constant block. ``sense`` is "min" or "max".
    """

    n_vars: int
    objective: np.ndarray
    f0: np.ndarray = field(repr=False)
    basis: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] = field(repr=False)
    eq_constraints: Tuple[Tuple[np.ndarray, float], ...] = ()
    ineq_constraints: Tuple[Tuple[np.ndarray, float], ...] = ()
    sense: str = "min"
    objective_const: float = 0.0
    # facial reduction: orthonormal basis of the active face, applied as
    # w^T M(y) w >= 0; used together with the matching kernel equalities
    reduction: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise SdpError(f"sense must be 'min' or 'max', got {self.sense!r}")
        obj = np.asarray(self.objective, dtype=float)
        if obj.shape != (self.n_vars,):
            raise SdpError(f"objective has shape {obj.shape}, expected ({self.n_vars},)")
        f0 = np.asarray(self.f0, dtype=float)
        if f0.ndim != 2 or f0.shape[0] != f0.shape[1]:
            raise SdpError("F0 must be square")
        if np.max(np.abs(f0 - f0.T), initial=0.0) > 1e-12:
            raise SdpError("F0 is not symmetric within 1e-12")
        var, row, col, val = (np.asarray(a) for a in self.basis)
        if not (len(var) == len(row) == len(col) == len(val)):
            raise SdpError("basis arrays must have equal length")
        if len(var) and (var.min() < 0 or var.max() >= self.n_vars):
            raise SdpError("basis variable index out of range")
        dim = f0.shape[0]
        if len(row) and (row.min() < 0 or max(row.max(), col.max()) >= dim):
            raise SdpError("basis entry outside the PSD block")
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "basis", (var, row, col, val.astype(float)))

    @property
    def dim(self) -> int:
        return self.f0.shape[0]

    @classmethod
    def from_dense_basis(
        cls,
        objective: Sequence[float],
        f0: np.ndarray,
        f_list: Sequence[np.ndarray],
        eq_constraints=(),
        ineq_constraints=(),
        sense: str = "min",
        objective_const: float = 0.0,
    ) -> "SdpProblem":
        """Build from explicit symmetric matrices F1..Fm."""
        var, row, col, val = [], [], [], []
        for i, f in enumerate(f_list):
            f = np.asarray(f, dtype=float)
            if np.max(np.abs(f - f.T), initial=0.0) > 1e-12:
                raise SdpError(f"F{i + 1} is not symmetric within 1e-12")
            r, c = np.nonzero(np.triu(np.abs(f) > 0))
            var.extend([i] * len(r))
            row.extend(r)
            col.extend(c)
            val.extend(f[r, c])
        return cls(
            n_vars=len(f_list),
            objective=np.asarray(objective, dtype=float),
            f0=np.asarray(f0, dtype=float),
            basis=(
                np.array(var, dtype=np.int64),
                np.array(row, dtype=np.int64),
                np.array(col, dtype=np.int64),
                np.array(val, dtype=float),
            ),
            eq_constraints=tuple((np.asarray(a, float), float(b)) for a, b in eq_constraints),
            ineq_constraints=tuple((np.asarray(a, float), float(b)) for a, b in ineq_constraints),
            sense=sense,
            objective_const=objective_const,
        )

    def assemble(self, y: np.ndarray) -> np.ndarray:
        """Dense M(y) = F0 + sum_i y_i F_i."""
        var, row, col, val = self.basis
        m = self.f0.copy()
        np.add.at(m, (row, col), y[var] * val)
        mirror = row != col
        np.add.at(m, (col[mirror], row[mirror]), y[var[mirror]] * val[mirror])
        return m


@dataclass(frozen=True)
class SdpSolution:
    """Solver output; ``value`` is certified within ``duality_gap``."""

    status: str
    value: float
    y: np.ndarray
    duality_gap: float
    min_eigenvalue: float
    iterations: int
    primal_residual: float
    dual_residual: float
    wall_time_ms: float


@dataclass(frozen=True)
class FeasibilityReport:
    """Constraint residuals of a candidate point."""

    min_eigenvalue: float
    eq_residuals: np.ndarray
    ineq_violations: np.ndarray
    objective_value: float

    def feasible(self, tol: float = 1e-9) -> bool:
        eq_ok = np.all(np.abs(self.eq_residuals) <= tol) if self.eq_residuals.size else True
        ineq_ok = np.all(self.ineq_violations <= tol) if self.ineq_violations.size else True
        return bool(self.min_eigenvalue >= -tol and eq_ok and ineq_ok)


def feasibility_check(problem: SdpProblem, y: np.ndarray) -> FeasibilityReport:
    """Residuals of ``y`` against every constraint of ``problem``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (problem.n_vars,):
        raise SdpError(f"candidate has shape {y.shape}, expected ({problem.n_vars},)")
    m = problem.assemble(y)
    if problem.reduction is not None:
        m = problem.reduction.T @ m @ problem.reduction
    min_eig = float(np.linalg.eigvalsh(m)[0]) if m.size else 0.0
    eq = np.array([a @ y - b for a, b in problem.eq_constraints])
    ineq = np.array([a @ y - b for a, b in problem.ineq_constraints])
    return FeasibilityReport(
        min_eigenvalue=min_eig,
        eq_residuals=eq,
        ineq_violations=ineq,
        objective_value=float(problem.objective @ y + problem.objective_const),
    )


# ---------------------------------------------------------------------------
# presolve: fold inequalities into the block, eliminate equalities


def _fold_inequalities(problem: SdpProblem):
    """Return (f0, basis arrays, dim) with 1x1 slack entries appended."""
    var, row, col, val = problem.basis
    n = problem.dim
    k = len(problem.ineq_constraints)
    dim = n + k
    f0 = np.zeros((dim, dim))
    f0[:n, :n] = problem.f0
    var_l = [var]
    row_l = [row]
    col_l = [col]
    val_l = [val]
    for j, (a, b) in enumerate(problem.ineq_constraints):
        f0[n + j, n + j] = b
        nz = np.nonzero(a)[0]
        var_l.append(nz)
        row_l.append(np.full(len(nz), n + j, dtype=np.int64))
        col_l.append(np.full(len(nz), n + j, dtype=np.int64))
        val_l.append(-a[nz])
    return (
        f0,
        np.concatenate(var_l),
        np.concatenate(row_l),
        np.concatenate(col_l),
        np.concatenate(val_l),
        dim,
    )


def _eliminate_equalities(problem: SdpProblem):
    """Particular solution and nullspace basis of the equality system.

    Returns (y0, nullbasis) with y = y0 + N z, or raises on an
    inconsistent system. With no equalities this is (0, I) implicitly,
    signalled by nullbasis = None.
    """
    if not problem.eq_constraints:
        return np.zeros(problem.n_vars), None
    a = np.vstack([a for a, _ in problem.eq_constraints])
    b = np.array([v for _, v in problem.eq_constraints])
    y0, residual, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if np.max(np.abs(a @ y0 - b), initial=0.0) > 1e-9 * (1 + np.abs(b).max(initial=0.0)):
        raise SdpError("equality constraints are inconsistent")
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    tol = max(a.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    nullbasis = vt[rank:].T
    return y0, nullbasis


# ---------------------------------------------------------------------------
# HKM core on the pure LMI  min c.z  s.t.  G0 + sum_j z_j G_j >= 0


class _LmiData:
    """Sparse LMI data with fast assembly, adjoint and Schur complement.

    An optional congruence basis ``w`` (full-dim x reduced-dim, orthonormal
    columns) restricts the block to w^T M(y) w; the sparse entry arrays stay
    in the full space and the two dense iterate matrices are lifted instead,
    using tr(w^T G_j w A w^T G_k w B) = tr(G_j (w A w^T) G_k (w B w^T)).
    """

    def __init__(self, g0, var, row, col, val, n_vars, dim, w=None, block=256):
        self.full_dim = dim
        self.n_vars = n_vars
        self.w = w
        self.dim = dim if w is None else w.shape[1]
        self.g0 = g0 if w is None else w.T @ g0 @ w
        self.block = block
        off = row != col
        # duplicated entries for full (non-triangular) scatter/gather
        self.frow = np.concatenate([row, col[off]])
        self.fcol = np.concatenate([col, row[off]])
        self.fvar = np.concatenate([var, var[off]])
        self.fval = np.concatenate([val, val[off]])
        # scatter matrix: (dim*dim, n_vars), column j = vec(G_j)
        self.scatter = sps.csr_matrix(
            (self.fval, (self.frow * dim + self.fcol, self.fvar)),
            shape=(dim * dim, n_vars),
        )
        self.scatter_t = self.scatter.T.tocsr()
        self.scatter_c = sps.csc_matrix(self.scatter)
        # cache the dense scatter when it fits comfortably in memory
        self._cached_dense = (
            self.scatter_c.toarray() if dim * dim * n_vars <= 10_000_000 else None
        )

    def _lift(self, mat):
        return mat if self.w is None else self.w @ mat @ self.w.T

    def assemble(self, z):
        n = self.full_dim
        m = np.zeros((n, n))
        flat = m.reshape(-1)
        np.add.at(flat, self.frow * n + self.fcol, z[self.fvar] * self.fval)
        if self.w is None:
            return self.g0 + m
        return self.g0 + self.w.T @ m @ self.w

    def adjoint(self, mat):
        """Vector with entries <G_j, mat> in the (possibly reduced) block."""
        return self.scatter_t @ self._lift(mat).reshape(-1)

    def _dense_block(self, start, stop):
        if self._cached_dense is not None:
            return self._cached_dense[:, start:stop]
        return self.scatter_c[:, start:stop].toarray()

    def schur(self, xi, yv):
        """Dense HKM Schur complement B[j,k] = tr(G_j Xi G_k Y)."""
        n, m = self.full_dim, self.n_vars
        xi = self._lift(xi)
        yv = self._lift(yv)
        out = np.empty((m, m))
        for start in range(0, m, self.block):
            stop = min(start + self.block, m)
            width = stop - start
            dense = self._dense_block(start, stop)
            # T_j = Xi G_j Y per column, as two reshaped matmuls
            t1 = xi @ dense.reshape(n, n * width)
            t2 = t1.reshape(n, n, width).transpose(1, 0, 2).reshape(n, n * width)
            t3 = yv @ t2
            t = t3.reshape(n, n, width).transpose(1, 0, 2).reshape(n * n, width)
            out[:, start:stop] = self.scatter_t @ t
        return out


def _robust_cholesky(mat):
    """Cholesky with one jittered retry; None when hopeless."""
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    lam_min = float(np.linalg.eigvalsh(mat)[0])
    jitter = (abs(lam_min) * 2.0 + 1e-14 * (1.0 + np.trace(mat) / mat.shape[0]))
    try:
        return np.linalg.cholesky(mat + jitter * np.eye(mat.shape[0]))
    except np.linalg.LinAlgError:
        return None


def _max_step(mat, dmat, chol):
    """Largest a with mat + a*dmat >= 0, via eigs of L^-1 dmat L^-T."""
    l = chol
    w = sla.solve_triangular(l, dmat, lower=True)
    w = sla.solve_triangular(l, w.T, lower=True)
    lam_min = float(np.linalg.eigvalsh(0.5 * (w + w.T))[0])
    if lam_min >= -1e-14:
        return np.inf
    return -1.0 / lam_min


def solve(
    problem: SdpProblem,
    tol: float = 1e-8,
    max_iter: int = 200,
    feas_tol: Optional[float] = None,
) -> SdpSolution:
    """Solve an SdpProblem with the HKM predictor-corrector iteration.

    The reported ``value`` is the primal objective at the final iterate;
    ``duality_gap`` bounds its distance from the optimum when the status
    is "optimal".
    """
    t_start = time.perf_counter()
    feas_tol = tol if feas_tol is None else feas_tol
    sign = 1.0 if problem.sense == "min" else -1.0
    # the blocks here are small; threaded BLAS only adds dispatch overhead
    with threadpool_limits(limits=1):
        return _solve_single_threaded(problem, tol, max_iter, feas_tol, sign, t_start)


def _solve_single_threaded(problem, tol, max_iter, feas_tol, sign, t_start):

    f0, var, row, col, val, dim = _fold_inequalities(problem)
    y0, nullbasis = _eliminate_equalities(problem)
    w = None
    if problem.reduction is not None:
        k = len(problem.ineq_constraints)
        w = np.zeros((dim, problem.reduction.shape[1] + k))
        w[: problem.dim, : problem.reduction.shape[1]] = problem.reduction
        w[problem.dim :, problem.reduction.shape[1] :] = np.eye(k)

    if nullbasis is not None and nullbasis.shape[1] == 0:
        # fully determined by equalities
        rep = feasibility_check(problem, y0)
        status = "optimal" if rep.feasible(1e-9) else "infeasible"
        return SdpSolution(
            status=status,
            value=rep.objective_value,
            y=y0,
            duality_gap=0.0,
            min_eigenvalue=rep.min_eigenvalue,
            iterations=0,
            primal_residual=0.0,
            dual_residual=0.0,
            wall_time_ms=(time.perf_counter() - t_start) * 1e3,
        )

    if nullbasis is None:
        n_z = problem.n_vars
        g0 = f0
        lmi = _LmiData(g0, var, row, col, val, n_z, dim, w=w)
        cost = sign * problem.objective
        expand = None
    else:
        # y = y0 + N z: G0 absorbs y0, columns of N combine the F_i
        n_z = nullbasis.shape[1]
        base = sps.csr_matrix(
            (val, (row * dim + col, var)), shape=(dim * dim, problem.n_vars)
        )
        full = np.zeros((dim, dim))
        flat = full.reshape(-1)
        np.add.at(flat, row * dim + col, y0[var] * val)
        off = row != col
        np.add.at(flat, col[off] * dim + row[off], y0[var[off]] * val[off])
        g0 = f0 + full
        comb = (base @ sps.csr_matrix(nullbasis)).tocoo()
        pos = np.asarray(comb.row)
        var_z = np.asarray(comb.col, dtype=np.int64)
        row_z = (pos // dim).astype(np.int64)
        col_z = (pos % dim).astype(np.int64)
        val_z = np.asarray(comb.data, dtype=float)
        lmi = _LmiData(g0, var_z, row_z, col_z, val_z, n_z, dim, w=w)
        cost = sign * (nullbasis.T @ problem.objective)
        expand = nullbasis

    # normalizing the objective makes positively scaled problems follow
    # identical iterates, so the argmax is scale invariant
    cost_scale = np.abs(cost).max(initial=0.0)
    cost_scale = cost_scale if cost_scale > 0 else 1.0
    cost = cost / cost_scale

    rdim = lmi.dim
    scale = max(1.0, np.abs(lmi.g0).max(initial=0.0))
    z = np.zeros(n_z)
    x = np.eye(rdim) * scale
    yv = np.eye(rdim)

    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        gz = lmi.assemble(z)
        p_res = gz - x
        d_res = cost - lmi.adjoint(yv)
        mu = float(np.tensordot(x, yv) / rdim)
        p_norm = np.linalg.norm(p_res) / (1 + np.linalg.norm(lmi.g0))
        d_norm = np.linalg.norm(d_res) / (1 + np.linalg.norm(cost))
        pobj = float(cost @ z)
        dobj = float(-np.tensordot(lmi.g0, yv))
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        if gap <= tol and p_norm <= feas_tol and d_norm <= feas_tol:
            status = "optimal"
            break
        # Farkas-style certificate: a large dual ray with vanishing adjoint
        # and negative pairing against G0 proves primal infeasibility
        ynorm = float(np.linalg.norm(yv))
        if ynorm > 1e8:
            yhat = yv / ynorm
            if (
                np.linalg.norm(lmi.adjoint(yhat)) < 1e-6
                and -float(np.tensordot(lmi.g0, yhat)) > 1e-8
            ):
                status = "infeasible"
                break

        chol_x = _robust_cholesky(x)
        chol_y = _robust_cholesky(yv)
        if chol_x is None or chol_y is None:
            status = "max_iter"
            break
        xi = sla.cho_solve((chol_x, True), np.eye(rdim))
        xi = 0.5 * (xi + xi.T)

        b = lmi.schur(xi, yv)
        b = 0.5 * (b + b.T)
        b[np.diag_indices_from(b)] += 1e-13 * (1.0 + np.abs(np.diag(b)))
        try:
            b_chol = sla.cho_factor(b, lower=True)
        except np.linalg.LinAlgError:
            status = "max_iter"
            break

        def direction(r_c):
            # complementarity target: dX Y + X dY = r_c - X Y
            rhs_mat = xi @ (r_c - x @ yv - p_res @ yv)
            rhs = lmi.adjoint(rhs_mat) - d_res
            dz = sla.cho_solve(b_chol, rhs)
            dx = lmi.assemble(dz) - lmi.g0 + p_res  # sum_j dz_j G_j + P
            dy_ns = xi @ (r_c - x @ yv) - xi @ dx @ yv
            dy = 0.5 * (dy_ns + dy_ns.T)
            return dz, dx, dy

        # predictor (affine scaling)
        dz_a, dx_a, dy_a = direction(np.zeros((rdim, rdim)))
        ap = _max_step(x, dx_a, chol_x)
        ad = _max_step(yv, dy_a, chol_y)
        ap = min(1.0, 0.99 * ap)
        ad = min(1.0, 0.99 * ad)
        mu_aff = float(
            np.tensordot(x + ap * dx_a, yv + ad * dy_a) / rdim
        )
        sigma = max(min((mu_aff / mu) ** 3, 1.0), 1e-8)

        # corrector
        r_c = sigma * mu * np.eye(rdim) - dx_a @ dy_a
        dz, dx, dy = direction(r_c)
        ap = _max_step(x, dx, chol_x)
        ad = _max_step(yv, dy, chol_y)
        step = 0.98
        ap = min(1.0, step * ap)
        ad = min(1.0, step * ad)

        z = z + ap * dz
        x = x + ap * dx
        yv = yv + ad * dy

    gz = lmi.assemble(z)
    min_eig = float(np.linalg.eigvalsh(gz)[0])
    pobj = float(cost @ z) * cost_scale
    dobj = float(-np.tensordot(lmi.g0, yv)) * cost_scale
    gap_abs = abs(pobj - dobj)
    p_norm = float(np.linalg.norm(gz - x) / (1 + np.linalg.norm(lmi.g0)))
    d_norm = float(
        np.linalg.norm(cost - lmi.adjoint(yv)) / (1 + np.linalg.norm(cost))
    )
    if status != "infeasible":
        gap = gap_abs / (1 + abs(pobj) + abs(dobj))
        if gap <= tol and p_norm <= feas_tol and d_norm <= feas_tol:
            status = "optimal"
    y_full = y0 + (expand @ z if expand is not None else z)
    value = sign * pobj + problem.objective @ y0 + problem.objective_const

    return SdpSolution(
        status=status,
        value=float(value),
        y=y_full,
        duality_gap=float(gap_abs),
        min_eigenvalue=min_eig,
        iterations=it,
        primal_residual=p_norm,
        dual_residual=d_norm,
        wall_time_ms=(time.perf_counter() - t_start) * 1e3,
    )


# ---------------------------------------------------------------------------
# plain-text triplet dump / load


def dump_problem(problem: SdpProblem, path: str) -> None:
    """Write a problem as plain-text lines; matrix index 0 is F0.

    Sections: header (n_vars, dim, sense, const), objective (var value),
    psd (matrix row col value), eq / ineq (constraint-index var value | rhs).
    """
    var, row, col, val = problem.basis
    with open(path, "w") as fh:
        fh.write(
            f"header {problem.n_vars} {problem.dim} {problem.sense} "
            f"{float(problem.objective_const)!r}\n"
        )
        for i, v in enumerate(problem.objective):
            if v != 0.0:
                fh.write(f"obj {i} {float(v)!r}\n")
        r, c = np.nonzero(np.triu(np.abs(problem.f0) > 0))
        for i, j in zip(r, c):
            fh.write(f"psd 0 {i} {j} {float(problem.f0[i, j])!r}\n")
        for k in range(len(var)):
            fh.write(f"psd {var[k] + 1} {row[k]} {col[k]} {float(val[k])!r}\n")
        for kind, constraints in (
            ("eq", problem.eq_constraints),
            ("ineq", problem.ineq_constraints),
        ):
            for ci, (a, bb) in enumerate(constraints):
                fh.write(f"{kind}rhs {ci} {float(bb)!r}\n")
                for i in np.nonzero(a)[0]:
                    fh.write(f"{kind} {ci} {i} {float(a[i])!r}\n")


def load_problem(path: str) -> SdpProblem:
    """Inverse of :func:`dump_problem`."""
    n_vars = dim = None
    sense = "min"
    const = 0.0
    obj = None
    f0 = None
    var, row, col, val = [], [], [], []
    eq: dict = {}
    ineq: dict = {}
    eq_rhs: dict = {}
    ineq_rhs: dict = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "header":
                n_vars, dim = int(parts[1]), int(parts[2])
                sense = parts[3]
                const = float(parts[4])
                obj = np.zeros(n_vars)
                f0 = np.zeros((dim, dim))
            elif tag == "obj":
                obj[int(parts[1])] = float(parts[2])
            elif tag == "psd":
                m, i, j, v = int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])
                if m == 0:
                    f0[i, j] = v
                    f0[j, i] = v
                else:
                    var.append(m - 1)
                    row.append(i)
                    col.append(j)
                    val.append(v)
            elif tag in ("eqrhs", "ineqrhs"):
                (eq_rhs if tag == "eqrhs" else ineq_rhs)[int(parts[1])] = float(parts[2])
            elif tag in ("eq", "ineq"):
                store = eq if tag == "eq" else ineq
                ci = int(parts[1])
                store.setdefault(ci, np.zeros(n_vars))[int(parts[2])] = float(parts[3])
            else:
                raise SdpError(f"unknown record {tag!r}")
    eq_list = tuple((eq.get(i, np.zeros(n_vars)), eq_rhs[i]) for i in sorted(eq_rhs))
    ineq_list = tuple(
        (ineq.get(i, np.zeros(n_vars)), ineq_rhs[i]) for i in sorted(ineq_rhs)
    )
    return SdpProblem(
        n_vars=n_vars,
        objective=obj,
        f0=f0,
        basis=(
            np.array(var, dtype=np.int64),
            np.array(row, dtype=np.int64),
            np.array(col, dtype=np.int64),
            np.array(val, dtype=float),
        ),
        eq_constraints=eq_list,
        ineq_constraints=ineq_list,
        sense=sense,
        objective_const=const,
    )
