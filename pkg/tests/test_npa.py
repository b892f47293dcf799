import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hardy_dicka import npa, sdp
from hardy_dicka.hardy import build_hardy_state, hardy_params
from hardy_dicka.keyrate import NoiseParams, parity_chsh_expression
from hardy_dicka.npa import (
    NpaError,
    Scenario,
    build_moment_matrix,
    compile_probability,
    generate_monomials,
    moment_vector,
    reduce_string,
    word_adjoint,
    word_canonical,
    word_mul,
)

PARAMS = hardy_params(3)
STATE = build_hardy_state(PARAMS)


def word_strategy():
    letters = st.sampled_from(["Z", "X", "ZX", "XZ", "ZXZ", ""])
    return st.tuples(letters, letters, letters)


class TestWordAlgebra:
    def test_reduce_examples(self):
        assert reduce_string("ZZ") == ""
        assert reduce_string("ZXXZ") == ""
        assert reduce_string("ZXZ") == "ZXZ"
        assert reduce_string("XZZX") == ""

    @given(st.text(alphabet="ZX", max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_reduce_idempotent(self, s):
        once = reduce_string(s)
        assert reduce_string(once) == once
        assert "ZZ" not in once and "XX" not in once

    @given(word_strategy(), word_strategy())
    @settings(max_examples=60, deadline=None)
    def test_canonical_mirror(self, u, v):
        uv = word_mul(word_adjoint(u), v)
        vu = word_mul(word_adjoint(v), u)
        assert word_canonical(uv) == word_canonical(vu)

    @given(word_strategy())
    @settings(max_examples=40, deadline=None)
    def test_self_product_is_identity(self, u):
        u = tuple(reduce_string(s) for s in u)
        assert word_mul(word_adjoint(u), u) == ("", "", "")


class TestGenerateMonomials:
    def test_one_party_level_one(self):
        words = generate_monomials(Scenario(1), 1)
        assert len(words) == 3  # 1, Z, X

    def test_two_parties_level_one(self):
        assert len(generate_monomials(Scenario(2), 1)) == 5

    def test_three_parties_level_two(self):
        # 1 + 6 singles + 6 in-party doubles + 12 cross-party pairs
        assert len(generate_monomials(Scenario(3), 2)) == 25

    def test_eve_adds_letter(self):
        words = generate_monomials(Scenario(2, include_eve=True), 1)
        assert len(words) == 6  # identity, Z1, X1, Z2, X2, E

    def test_deterministic_order(self):
        w1 = generate_monomials(Scenario(3), 2)
        w2 = generate_monomials(Scenario(3), 2)
        assert w1 == w2
        lengths = [sum(len(s) for s in w) for w in w1]
        assert lengths == sorted(lengths)

    def test_size_cap(self, monkeypatch):
        monkeypatch.setenv(npa.SIZE_CAP_ENV, "10")
        with pytest.raises(NpaError, match="cap"):
            generate_monomials(Scenario(3), 2)


class TestMomentMatrix:
    def test_single_party_z_block(self):
        scen = Scenario(1)
        mm = build_moment_matrix(scen, (("",), ("Z",)))
        assert mm.dim == 2
        # diagonal entries are the identity moment; off-diagonal is <Z>
        assert len(mm.var_words) == 1
        assert mm.var_words[0] == ("Z",)
        f0 = mm.f0()
        np.testing.assert_array_equal(f0, np.eye(2))

    def test_word_reduction_entry(self):
        # (ZX, X) entry reduces to the word ZXX -> Z ... adjoint(ZX) = XZ,
        # XZ * X = XZX
        scen = Scenario(1)
        mm = build_moment_matrix(scen, (("ZX",), ("X",)))
        assert ("XZX",) in mm.index or ("XZX",) == word_canonical(("XZX",))

    def test_cross_party_sharing(self):
        scen = Scenario(2)
        mm = build_moment_matrix(scen, generate_monomials(scen, 1))
        k = mm.index[word_canonical(("Z", "Z"))]
        var, row, col = mm.entries
        hits = [(r, c) for v, r, c in zip(var, row, col) if v == k]
        # entry appears once in the upper triangle: (Z1, Z2) row/col pair
        assert len(hits) == 1

    def test_antisymmetric_word_classes(self):
        # ZX and XZ are adjoints: one shared variable under the class
        # representative XZ (lexicographically smaller)
        scen = Scenario(1)
        words = (("",), ("Z",), ("X",), ("ZX",), ("XZ",))
        mm = build_moment_matrix(scen, words)
        assert word_canonical(("ZX",)) == ("XZ",)
        assert ("XZ",) in mm.index
        assert ("ZX",) not in mm.index


class TestCompileProbability:
    def setup_method(self):
        self.scen = Scenario(3, include_eve=True)
        self.mm = build_moment_matrix(
            self.scen, npa._hardy_generating_set(self.scen, 2)
        )

    def test_single_marginal(self):
        f = compile_probability(self.mm, (0,), (0,), (1,))
        assert f.const == pytest.approx(0.5)
        k = self.mm.index[word_canonical(("Z", "", "", ""))]
        assert f.coeffs[k] == pytest.approx(0.5)
        assert np.count_nonzero(f.coeffs) == 1

    def test_two_party_expansion(self):
        f = compile_probability(self.mm, (0, 1), (1, 0), (1, 1))
        assert f.const == pytest.approx(0.25)
        x1 = self.mm.index[word_canonical(("X", "", "", ""))]
        z2 = self.mm.index[word_canonical(("", "Z", "", ""))]
        x1z2 = self.mm.index[word_canonical(("X", "Z", "", ""))]
        assert f.coeffs[x1] == pytest.approx(0.25)
        assert f.coeffs[z2] == pytest.approx(0.25)
        assert f.coeffs[x1z2] == pytest.approx(0.25)

    def test_triple_minus_expansion_signs(self):
        # sign oracle: coefficient of each word is (-1)^(number of factors)
        f = compile_probability(self.mm, (0, 1, 2), (1, 1, 1), (-1, -1, -1))
        assert f.const == pytest.approx(1 / 8)
        singles = [("X", "", "", ""), ("", "X", "", ""), ("", "", "X", "")]
        pairs = [("X", "X", "", ""), ("X", "", "X", ""), ("", "X", "X", "")]
        triple = ("X", "X", "X", "")
        for w in singles:
            assert f.coeffs[self.mm.index[word_canonical(w)]] == pytest.approx(-1 / 8)
        for w in pairs:
            assert f.coeffs[self.mm.index[word_canonical(w)]] == pytest.approx(1 / 8)
        assert f.coeffs[self.mm.index[word_canonical(triple)]] == pytest.approx(-1 / 8)

    def test_evaluates_to_born_probability(self):
        y = moment_vector(self.mm, STATE, npa.hardy_observables(PARAMS, "alpha"))
        f = compile_probability(self.mm, (0, 1, 2), (0, 0, 0), (1, 1, 1))
        assert f.evaluate(y) == pytest.approx(PARAMS.p_max, abs=1e-12)
        f = compile_probability(self.mm, (0, 1, 2), (1, 1, 1), (1, 1, 1))
        assert f.evaluate(y) == pytest.approx(PARAMS.all_one_success, abs=1e-12)

    def test_missing_monomial_raises(self):
        small = build_moment_matrix(Scenario(3), generate_monomials(Scenario(3), 1))
        with pytest.raises(NpaError, match="generating set"):
            compile_probability(small, (0, 1, 2), (0, 0, 0), (1, 1, 1))


class TestIdealRealizationOracle:
    def test_alpha_frame_feasible_everywhere(self):
        # the explicit Hardy realization satisfies every exact constraint set
        noise = NoiseParams(0.0, 0.0)
        scen = Scenario(3, include_eve=True)
        mm = build_moment_matrix(scen, npa._hardy_generating_set(scen, 2))
        eqs, ineqs, reduction = npa._hardy_constraints(mm, PARAMS, noise, True)
        y = moment_vector(mm, STATE, npa.hardy_observables(PARAMS, "alpha"))
        drop = PARAMS.t_r**3
        zzz = compile_probability(mm, (0, 1, 2), (0, 0, 0), (1, 1, 1), eve_outcome=1)
        obj = zzz.scaled(1.0 / (2 * PARAMS.p_max))
        prob = npa.assemble_problem(mm, obj, "max", eqs, ineqs, reduction)
        rep = sdp.feasibility_check(prob, y)
        assert rep.min_eigenvalue >= -1e-9
        if rep.eq_residuals.size:
            assert np.abs(rep.eq_residuals).max() < 1e-9

    def test_swap_constraint_sets_feasible(self):
        noise = NoiseParams(0.0, 0.0)
        scen = Scenario(3)
        words = npa._swap_generating_set(scen, 2, npa._fidelity_objective_words())
        mm = build_moment_matrix(scen, words)
        eqs, ineqs, reduction = npa._hardy_constraints(mm, PARAMS, noise, False)
        y = moment_vector(mm, STATE, npa.hardy_observables(PARAMS, "alpha"))
        obj = npa.fidelity_functional(mm, PARAMS)
        prob = npa.assemble_problem(mm, obj, "min", eqs, ineqs, reduction)
        rep = sdp.feasibility_check(prob, y)
        assert rep.min_eigenvalue >= -1e-9
        assert np.abs(rep.eq_residuals).max() < 1e-9

    def test_fidelity_ideal_swap_frame(self):
        scen = Scenario(3)
        words = npa._swap_generating_set(scen, 2, npa._fidelity_objective_words())
        mm = build_moment_matrix(scen, words)
        f = npa.fidelity_functional(mm, PARAMS)
        y = moment_vector(mm, STATE, npa.hardy_observables(PARAMS, "pauli"))
        assert f.evaluate(y) == pytest.approx(1.0, abs=1e-9)

    def test_merit_ideal_swap_frame(self):
        scen = Scenario(3)
        words = npa._swap_generating_set(scen, 2, npa._merit_objective_words())
        mm = build_moment_matrix(scen, words)
        g = npa.merit_functional(mm)
        y = moment_vector(mm, STATE, npa.hardy_observables(PARAMS, "pauli"))
        assert g.evaluate(y) == pytest.approx(1.0, abs=1e-9)

    def test_merit_operators(self):
        z = np.diag([1.0, -1.0])
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert npa.merit_value_operators(STATE, z, x) == pytest.approx(1.0, abs=1e-9)

    def test_merit_trivial_benchmark(self):
        assert npa.merit_trivial_benchmark() == 0.0


class TestBounds:
    def test_chsh_tsirelson(self):
        v = npa.chsh_bound(level=1)
        assert v == pytest.approx(2 * np.sqrt(2), abs=1e-5)

    def test_guessing_ideal_level2(self):
        v = npa.guessing_probability(NoiseParams(0, 0), level=2)
        assert 0.5 - 1e-6 <= v <= 0.55

    def test_guessing_no_constraints_is_one(self):
        # removing every Hardy constraint lets Eve guess deterministically
        scen = Scenario(3, include_eve=True)
        mm = build_moment_matrix(scen, npa._hardy_generating_set(scen, 2))
        zzz = compile_probability(mm, (0, 1, 2), (0, 0, 0), (1, 1, 1), eve_outcome=1)
        xxx = compile_probability(mm, (0, 1, 2), (1, 1, 1), (1, 1, 1), eve_outcome=-1)
        drop = PARAMS.t_r**3
        obj = (zzz + xxx.scaled(drop)).scaled(1.0 / (2 * PARAMS.p_max))
        # normalization: without constraints the maximum of the numerator
        # is p_max + d * q_tilde = 2 p_max, reached by a deterministic Eve
        prob = npa.assemble_problem(mm, obj, "max")
        sol = sdp.solve(prob, tol=1e-8)
        assert sol.value >= 1.0 - 1e-6

    def test_bell_guess_unconstrained_is_one(self):
        expr = parity_chsh_expression()
        scen = Scenario(3, include_eve=True)
        mm = build_moment_matrix(scen, npa._hardy_generating_set(scen, 2))
        agree = compile_probability(mm, (0,), (0,), (1,), eve_outcome=1)
        agree = agree + compile_probability(mm, (0,), (0,), (-1,), eve_outcome=-1)
        sol = sdp.solve(npa.assemble_problem(mm, agree, "max"), tol=1e-8)
        assert sol.value == pytest.approx(1.0, abs=1e-6)

    def test_bell_guess_infeasible_beta(self):
        expr = parity_chsh_expression()
        with pytest.raises(NpaError, match="unreachable"):
            npa.bell_guess(expr, 3.0, level=2, max_iter=80)

    def test_probability_functionals_in_range_after_solve(self):
        rec = []
        v = npa.guessing_probability(NoiseParams(0, 0), level=2, record_sink=rec)
        assert rec[0]["probabilities_in_range"]
