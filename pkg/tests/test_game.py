"""Game engine: joint probabilities, payoffs, adversaries, sampling, tallies.

The engine never builds the full three-qubit space; the oracle here does,
evaluating p(a, b) = tr[(Pi_a x B_b)(rho_AB x omega_C)] on 8x8 matrices so
the two routes share no code beyond the state constructors.
"""

import math

import numpy as np
import pytest

from qrsgame.game import (
    SQRT3,
    BinaryPovm,
    CustomLocal,
    GameSpec,
    HonestQuantum,
    LhsDeterministic,
    LocalComponent,
    TallyTable,
    canonical_game,
    estimate_payoff,
    exact_payoff,
    format_tally,
    is_canonical,
    joint_probabilities,
    lhs_best_deterministic,
    load_tally,
    partial_bsm_povm,
    random_lhs_strategy,
    random_local_strategy,
    realize_lhs_best,
    save_tally,
    simulate_runs,
    singlet_projector_bc,
)
from qrsgame.qmath import bloch_to_density, identity, pauli
from qrsgame.states import (
    SETTING_KEYS,
    BellIndex,
    RefereeEnsemble,
    bell_state,
    referee_ideal,
    referee_state,
    rotate_ensemble,
    werner_state,
)

CELLS = ((1, 1), (1, 0), (-1, 1), (-1, 0))


def brute_force_honest(strategy, ensemble, j, s):
    """Full 8-dimensional evaluation of the honest joint distribution."""
    omega = referee_state(ensemble, j, s)
    state = np.kron(strategy.shared_state, omega)
    povm = {1: strategy.bob_povm.b1, 0: strategy.bob_povm.b0}
    out = {}
    for a in (1, -1):
        proj = 0.5 * (identity(2) + a * pauli(j))
        for b in (1, 0):
            op = np.kron(proj, povm[b])
            out[(a, b)] = float(np.trace(op @ state).real)
    return out


def brute_force_lhs(strategy, ensemble, j, s):
    """LHS route without the precomputed referee-side effect."""
    omega = referee_state(ensemble, j, s)
    hidden = bloch_to_density(strategy.hidden_state)
    state = np.kron(hidden, omega)
    q = float(np.trace(strategy.bob_povm.b1 @ state).real)
    a = strategy.alice_signs[j - 1]
    return {(a, 1): q, (a, 0): 1.0 - q, (-a, 1): 0.0, (-a, 0): 0.0}


def random_rotation(rng):
    g = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(g)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def perturbed_ensemble(rng):
    base = rotate_ensemble(referee_ideal(), random_rotation(rng))
    vectors = {}
    for key in SETTING_KEYS:
        v = rng.uniform(0.3, 1.0) * base.vector(*key) + 0.05 * rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm > 1.0:
            v = v / norm
        vectors[key] = v
    return RefereeEnsemble(vectors)


class TestGameSpec:
    def test_canonical_structure(self):
        spec = canonical_game(1.081)
        assert spec.alice_inputs == (1, 2, 3)
        assert spec.referee_keys == SETTING_KEYS
        assert spec.payoff_scale == 2.0
        assert np.isclose(spec.constant_outputs[0], -1.081 / SQRT3)
        for j, s in SETTING_KEYS:
            assert spec.coefficients[(j, (j, s))] == float(s)
            assert spec.coefficients[(0, (j, s))] == 1.0
        assert is_canonical(spec)

    def test_non_canonical_detected(self):
        spec = canonical_game(1.0)
        spec.payoff_scale = 1.0
        assert not is_canonical(spec)
        spec = canonical_game(1.0)
        spec.coefficients[(1, (1, 1))] = 2.0
        assert not is_canonical(spec)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            canonical_game(-0.5)

    def test_duplicate_keys_rejected(self):
        with pytest.raises(ValueError, match="duplicates"):
            GameSpec((1,), ((1, 1), (1, 1)), {}, 1.0, 1.0, {})

    def test_foreign_key_weight_rejected(self):
        # A reported row may only multiply the correlator of its own key.
        with pytest.raises(ValueError, match="own key"):
            GameSpec((1, 2), ((1, 1), (2, 1)), {(1, (2, 1)): 1.0}, 1.0, 1.0, {})

    def test_unknown_row_rejected(self):
        with pytest.raises(ValueError, match="unknown row"):
            GameSpec((1,), ((1, 1),), {(9, (1, 1)): 1.0}, 1.0, 1.0, {})

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            GameSpec((1,), ((1, 1),), {(1, (1, -1)): 1.0}, 1.0, 1.0, {})


class TestPovms:
    def test_singlet_projector(self):
        povm = singlet_projector_bc()
        assert np.allclose(povm.b1, bell_state(BellIndex.PSI_MINUS))
        assert np.allclose(povm.b0 + povm.b1, identity(4))

    def test_visibility_limits(self):
        assert np.allclose(partial_bsm_povm(1.0).b1, singlet_projector_bc().b1)
        assert np.allclose(partial_bsm_povm(0.0).b1, identity(4) / 2.0)

    def test_visibility_click_rate_on_singlet(self):
        povm = partial_bsm_povm(0.89)
        singlet = bell_state(BellIndex.PSI_MINUS)
        assert np.isclose(np.trace(povm.b1 @ singlet).real, 0.945)

    def test_visibility_range(self):
        with pytest.raises(ValueError, match="visibility"):
            partial_bsm_povm(1.01)

    def test_povm_validation(self):
        with pytest.raises(ValueError, match="4x4"):
            BinaryPovm(identity(2), identity(2))
        with pytest.raises(ValueError, match="not Hermitian"):
            b1 = np.zeros((4, 4), dtype=complex)
            b1[0, 1] = 1.0
            BinaryPovm(identity(4) - b1, b1)
        with pytest.raises(ValueError, match="positive semidefinite"):
            b1 = np.diag([-0.1, 0.5, 0.5, 0.5]).astype(complex)
            BinaryPovm(identity(4) - b1, b1)
        with pytest.raises(ValueError, match="sum to the identity"):
            BinaryPovm(identity(4) / 2.0, identity(4) / 4.0)


class TestStrategyValidation:
    def test_honest_needs_density_matrix(self):
        with pytest.raises(ValueError, match="shared_state"):
            HonestQuantum(identity(4), singlet_projector_bc())

    def test_lhs_sign_validation(self):
        with pytest.raises(ValueError, match="alice_signs"):
            LhsDeterministic((1, 0, 1), np.zeros(3), singlet_projector_bc())

    def test_lhs_effect_for_ideal_analyzer(self):
        """Against the singlet projector a pure hidden qubit at m induces
        the flipped effect (1 - m.sigma)/4 on the referee side."""
        rng = np.random.default_rng(3)
        for _ in range(10):
            m = rng.normal(size=3)
            m /= np.linalg.norm(m)
            strat = LhsDeterministic((1, 1, 1), m, singlet_projector_bc())
            want = (identity(2) - sum(m[i - 1] * pauli(i) for i in (1, 2, 3))) / 4.0
            assert np.allclose(strat.effect, want, atol=1e-12)

    def test_component_validation(self):
        alice = {1: 0.5, 2: 0.5, 3: 0.5}
        with pytest.raises(ValueError, match="weight"):
            LocalComponent(-0.1, alice, identity(2) / 2.0)
        with pytest.raises(ValueError, match="alice_plus"):
            LocalComponent(1.0, {1: 0.5, 2: 0.5}, identity(2) / 2.0)
        with pytest.raises(ValueError, match="probability"):
            LocalComponent(1.0, {1: 0.5, 2: 1.5, 3: 0.5}, identity(2) / 2.0)
        with pytest.raises(ValueError, match="0 <= E <= 1"):
            LocalComponent(1.0, alice, 2.0 * identity(2))

    def test_mixture_weights_must_sum_to_one(self):
        comp = LocalComponent(0.4, {1: 0.5, 2: 0.5, 3: 0.5}, identity(2) / 2.0)
        with pytest.raises(ValueError, match="sum to 1"):
            CustomLocal((comp,))
        with pytest.raises(ValueError, match="at least one"):
            CustomLocal(())


class TestJointProbabilities:
    def test_honest_matches_brute_force(self):
        rng = np.random.default_rng(101)
        for _ in range(12):
            strat = HonestQuantum(
                werner_state(float(rng.random())), partial_bsm_povm(float(rng.random()))
            )
            ens = perturbed_ensemble(rng)
            for key in SETTING_KEYS:
                got = joint_probabilities(strat, ens, *key)
                want = brute_force_honest(strat, ens, *key)
                for cell in CELLS:
                    assert math.isclose(got[cell], want[cell], abs_tol=1e-12)

    def test_lhs_matches_brute_force(self):
        rng = np.random.default_rng(102)
        for _ in range(12):
            strat = random_lhs_strategy(rng)
            ens = perturbed_ensemble(rng)
            for key in SETTING_KEYS:
                got = joint_probabilities(strat, ens, *key)
                want = brute_force_lhs(strat, ens, *key)
                for cell in CELLS:
                    assert math.isclose(got[cell], want[cell], abs_tol=1e-12)

    def test_single_component_mixture_equals_lhs(self):
        # A one-component mixture with deterministic responses is the same
        # adversary as LhsDeterministic with the matching induced effect.
        rng = np.random.default_rng(103)
        ens = perturbed_ensemble(rng)
        lhs = random_lhs_strategy(rng)
        alice = {j: 1.0 if lhs.alice_signs[j - 1] == 1 else 0.0 for j in (1, 2, 3)}
        mix = CustomLocal((LocalComponent(1.0, alice, lhs.effect),))
        for key in SETTING_KEYS:
            got = joint_probabilities(mix, ens, *key)
            want = joint_probabilities(lhs, ens, *key)
            for cell in CELLS:
                assert math.isclose(got[cell], want[cell], abs_tol=1e-12)

    def test_singlet_anticorrelates_with_referee(self):
        """At W = 1 a click forces Alice's sign to match the referee's s."""
        strat = HonestQuantum(werner_state(1.0), singlet_projector_bc())
        ens = referee_ideal()
        probs = joint_probabilities(strat, ens, 3, 1)
        assert math.isclose(probs[(1, 1)], 0.25, abs_tol=1e-12)
        assert math.isclose(probs[(-1, 1)], 0.0, abs_tol=1e-12)
        assert math.isclose(probs[(1, 0)], 0.25, abs_tol=1e-12)
        assert math.isclose(probs[(-1, 0)], 0.5, abs_tol=1e-12)
        probs = joint_probabilities(strat, ens, 3, -1)
        assert math.isclose(probs[(-1, 1)], 0.25, abs_tol=1e-12)
        assert math.isclose(probs[(1, 1)], 0.0, abs_tol=1e-12)

    def test_fully_mixed_click_rate(self):
        strat = HonestQuantum(werner_state(0.0), singlet_projector_bc())
        ens = referee_ideal()
        for key in SETTING_KEYS:
            probs = joint_probabilities(strat, ens, *key)
            assert math.isclose(probs[(1, 1)] + probs[(-1, 1)], 0.25, abs_tol=1e-12)

    def test_normalization_all_strategies(self):
        rng = np.random.default_rng(104)
        ens = perturbed_ensemble(rng)
        strategies = [
            HonestQuantum(werner_state(0.7), partial_bsm_povm(0.9)),
            random_lhs_strategy(rng),
            random_local_strategy(rng),
        ]
        for strat in strategies:
            for key in SETTING_KEYS:
                probs = joint_probabilities(strat, ens, *key)
                assert math.isclose(sum(probs.values()), 1.0, abs_tol=1e-12)
                assert all(p >= -1e-12 for p in probs.values())

    def test_unknown_strategy_type(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            joint_probabilities(object(), referee_ideal(), 1, 1)


class TestExactPayoff:
    def test_linear_in_werner_weight(self):
        """Ideal setup reproduces 3W - sqrt(3) r over the whole grid."""
        ens = referee_ideal()
        povm = singlet_projector_bc()
        for r in (0.0, 1.0, 1.081, 1.5):
            spec = canonical_game(r)
            for w in np.linspace(0.0, 1.0, 21):
                strat = HonestQuantum(werner_state(float(w)), povm)
                got = exact_payoff(spec, strat, ens)
                assert math.isclose(got, 3.0 * w - SQRT3 * r, abs_tol=1e-12)

    def test_golden_point(self):
        spec = canonical_game(1.081)
        strat = HonestQuantum(werner_state(0.698), singlet_projector_bc())
        got = exact_payoff(spec, strat, referee_ideal())
        assert math.isclose(got, 3.0 * 0.698 - SQRT3 * 1.081, abs_tol=1e-12)
        assert round(got, 2) == 0.22

    def test_visibility_degrades_linearly(self):
        """Analyzer visibility v rescales the payoff to 3vW - sqrt(3) r (2 - v):
        the correlator shrinks by v while the click tax picks up the extra
        (1 - v)/2 background clicks."""
        ens = referee_ideal()
        rng = np.random.default_rng(105)
        for _ in range(10):
            w = float(rng.random())
            v = float(rng.random())
            r = float(2.0 * rng.random())
            strat = HonestQuantum(werner_state(w), partial_bsm_povm(v))
            got = exact_payoff(canonical_game(r), strat, ens)
            assert math.isclose(got, 3.0 * v * w - SQRT3 * r * (2.0 - v), abs_tol=1e-12)

    def test_affine_in_shared_state(self):
        ens = referee_ideal()
        spec = canonical_game(1.0)
        povm = partial_bsm_povm(0.9)
        p25 = exact_payoff(spec, HonestQuantum(werner_state(0.25), povm), ens)
        p75 = exact_payoff(spec, HonestQuantum(werner_state(0.75), povm), ens)
        p50 = exact_payoff(spec, HonestQuantum(werner_state(0.50), povm), ens)
        assert math.isclose(p50, 0.5 * (p25 + p75), abs_tol=1e-12)

    def test_slope_in_rate_is_click_tax(self):
        # d(payoff)/dr = -2 sqrt(3) * mean click rate; -sqrt(3) for Werner
        # against the ideal analyzer, where every setting clicks at 1/4.
        ens = referee_ideal()
        strat = HonestQuantum(werner_state(0.698), singlet_projector_bc())
        p1 = exact_payoff(canonical_game(1.0), strat, ens)
        p2 = exact_payoff(canonical_game(1.5), strat, ens)
        assert math.isclose(p2 - p1, -SQRT3 * 0.5, abs_tol=1e-12)


class TestLhsOptimum:
    def test_ideal_boundary_values(self):
        """Against the ideal ensemble the best no-steering payoff is
        2 sqrt(3) (1 - r), hitting zero exactly at r = 1."""
        ens = referee_ideal()
        for r in (0.0, 0.5, 1.0, 2.0):
            _, _, payoff = lhs_best_deterministic(canonical_game(r), ens)
            assert math.isclose(payoff, 2.0 * SQRT3 * (1.0 - r), abs_tol=1e-12)

    def test_ideal_tie_break(self):
        # All eight assignments tie on the ideal ensemble; the search must
        # settle on the lexicographically smallest one.
        signs, direction, _ = lhs_best_deterministic(canonical_game(0.5), referee_ideal())
        assert signs == (-1, -1, -1)
        assert np.allclose(direction, -np.ones(3) / SQRT3)

    def test_requires_canonical(self):
        spec = canonical_game(1.0)
        spec.payoff_scale = 4.0
        with pytest.raises(ValueError, match="canonical"):
            lhs_best_deterministic(spec, referee_ideal())

    def test_realized_strategy_attains_bound(self):
        rng = np.random.default_rng(106)
        for r in (0.5, 1.0, 2.0):
            spec = canonical_game(r)
            for ens in (referee_ideal(), perturbed_ensemble(rng)):
                _, _, predicted = lhs_best_deterministic(spec, ens)
                strat = realize_lhs_best(spec, ens)
                assert math.isclose(exact_payoff(spec, strat, ens), predicted, abs_tol=1e-9)

    def test_realized_beats_random_adversaries(self):
        rng = np.random.default_rng(107)
        ens = perturbed_ensemble(rng)
        spec = canonical_game(0.4)
        _, _, best = lhs_best_deterministic(spec, ens)
        for _ in range(50):
            assert exact_payoff(spec, random_lhs_strategy(rng), ens) <= best + 1e-9
        for _ in range(50):
            assert exact_payoff(spec, random_local_strategy(rng), ens) <= best + 1e-9


class TestSimulation:
    def test_deterministic_per_seed(self):
        spec = canonical_game(1.081)
        strat = HonestQuantum(werner_state(0.698), singlet_projector_bc())
        ens = referee_ideal()
        t1 = simulate_runs(spec, strat, ens, 500, seed=9)
        t2 = simulate_runs(spec, strat, ens, 500, seed=9)
        assert t1.counts == t2.counts
        t3 = simulate_runs(spec, strat, ens, 500, seed=10)
        assert t1.counts != t3.counts

    def test_totals(self):
        spec = canonical_game(1.0)
        strat = HonestQuantum(werner_state(0.5), singlet_projector_bc())
        tally = simulate_runs(spec, strat, referee_ideal(), 320, seed=0)
        for j, s in SETTING_KEYS:
            assert tally.total(j, s) == 320

    def test_argument_validation(self):
        spec = canonical_game(1.0)
        strat = HonestQuantum(werner_state(0.5), singlet_projector_bc())
        with pytest.raises(ValueError, match="n_per_setting"):
            simulate_runs(spec, strat, referee_ideal(), 0, seed=0)
        with pytest.raises(ValueError, match="seed"):
            simulate_runs(spec, strat, referee_ideal(), 10, seed=-1)

    def test_merged_adds_counts(self):
        spec = canonical_game(1.0)
        strat = HonestQuantum(werner_state(0.5), singlet_projector_bc())
        a = simulate_runs(spec, strat, referee_ideal(), 100, seed=1)
        b = simulate_runs(spec, strat, referee_ideal(), 150, seed=2)
        merged = a.merged(b)
        for j, s in SETTING_KEYS:
            assert merged.total(j, s) == 250

    def test_tally_validation(self):
        with pytest.raises(ValueError, match="malformed tally cell"):
            TallyTable({(1, 1, 2, 1): 5})
        with pytest.raises(ValueError, match="negative count"):
            TallyTable({(1, 1, 1, 1): -5})
        # Zero cells are dropped on construction.
        assert TallyTable({(1, 1, 1, 1): 0}).counts == {}


class TestEstimator:
    def test_plug_in_at_true_frequencies(self):
        """A tally holding the exact W = 1 distribution recovers the exact
        payoff: counts (1, 1, 0, 2)/4 per setting."""
        for r in (1.0, 1.081):
            spec = canonical_game(r)
            counts = {}
            for j, s in SETTING_KEYS:
                counts[(j, s, s, 1)] = 1
                counts[(j, s, s, 0)] = 1
                counts[(j, s, -s, 0)] = 2
            est = estimate_payoff(spec, TallyTable(counts))
            assert math.isclose(est.value, 3.0 - SQRT3 * r, abs_tol=1e-12)
            assert est.stderr > 0.0

    def test_no_clicks_means_zero(self):
        spec = canonical_game(1.0)
        counts = {(j, s, 1, 0): 7 for j, s in SETTING_KEYS}
        est = estimate_payoff(spec, TallyTable(counts))
        assert est.value == 0.0
        assert est.stderr == 0.0

    def test_doubling_counts_shrinks_stderr(self):
        spec = canonical_game(1.081)
        strat = HonestQuantum(werner_state(0.698), singlet_projector_bc())
        tally = simulate_runs(spec, strat, referee_ideal(), 2000, seed=4)
        doubled = TallyTable({c: 2 * n for c, n in tally.counts.items()})
        e1 = estimate_payoff(spec, tally)
        e2 = estimate_payoff(spec, doubled)
        assert math.isclose(e1.value, e2.value, abs_tol=1e-12)
        assert math.isclose(e1.stderr / e2.stderr, math.sqrt(2.0), rel_tol=1e-12)

    def test_stderr_tracks_empirical_spread(self):
        """Across seeds the reported standard error matches the empirical
        standard deviation of the estimates to within 20 percent."""
        spec = canonical_game(1.081)
        strat = HonestQuantum(werner_state(0.698), singlet_projector_bc())
        ens = referee_ideal()
        values = []
        errors = []
        for seed in range(200):
            est = estimate_payoff(spec, simulate_runs(spec, strat, ens, 400, seed))
            values.append(est.value)
            errors.append(est.stderr)
        empirical = float(np.std(values, ddof=1))
        reported = float(np.mean(errors))
        assert abs(empirical / reported - 1.0) < 0.2

    def test_unbiased_against_exact(self):
        spec = canonical_game(1.081)
        strat = HonestQuantum(werner_state(0.698), singlet_projector_bc())
        ens = referee_ideal()
        exact = exact_payoff(spec, strat, ens)
        values = [
            estimate_payoff(spec, simulate_runs(spec, strat, ens, 400, seed)).value
            for seed in range(200)
        ]
        # Mean of 200 estimates should sit within ~4 standard errors of truth.
        spread = float(np.std(values, ddof=1)) / math.sqrt(200.0)
        assert abs(float(np.mean(values)) - exact) < 4.0 * spread

    def test_missing_setting_is_an_error(self):
        spec = canonical_game(1.0)
        counts = {(j, s, 1, 1): 5 for j, s in SETTING_KEYS if (j, s) != (2, -1)}
        with pytest.raises(ValueError, match=r"\(j=2, s=-1\)"):
            estimate_payoff(spec, TallyTable(counts))

    def test_to_dict_layout(self):
        spec = canonical_game(1.0)
        strat = HonestQuantum(werner_state(0.5), singlet_projector_bc())
        est = estimate_payoff(spec, simulate_runs(spec, strat, referee_ideal(), 50, seed=0))
        data = est.to_dict()
        assert set(data) == {"value", "stderr", "n_per_setting"}
        assert data["n_per_setting"] == [
            {"j": j, "s": s, "n": 50} for j, s in SETTING_KEYS
        ]


class TestTallyCsv:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "tally.csv")
        spec = canonical_game(1.0)
        strat = HonestQuantum(werner_state(0.698), singlet_projector_bc())
        tally = simulate_runs(spec, strat, referee_ideal(), 300, seed=5)
        save_tally(tally, path)
        assert load_tally(path).counts == tally.counts

    def test_format_omits_zero_cells(self):
        text = format_tally(TallyTable({(1, 1, 1, 1): 3, (2, -1, -1, 0): 4}))
        assert text.splitlines() == ["j,s,a,b,count", "1,+1,+1,1,3", "2,-1,-1,0,4"]

    def test_header_is_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ValueError, match="header"):
            load_tally(str(path))

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("j,s,a,b,count\n1,+1,+1,1,3\n1,x,+1,1,2\n")
        with pytest.raises(ValueError, match="line 3"):
            load_tally(str(path))

    def test_duplicate_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("j,s,a,b,count\n1,+1,+1,1,3\n1,+1,+1,1,2\n")
        with pytest.raises(ValueError, match="duplicate"):
            load_tally(str(path))


def test_no_steering_payoff_never_positive_at_calibrated_rate():
    """Sampled soundness: random local adversaries stay nonpositive at the
    calibrated rate of each perturbed ensemble."""
    from qrsgame.witness import rstar_oracle

    rng = np.random.default_rng(108)
    for _ in range(8):
        ens = perturbed_ensemble(rng)
        spec = canonical_game(rstar_oracle(ens))
        for _ in range(30):
            assert exact_payoff(spec, random_lhs_strategy(rng), ens) <= 1e-9
            assert exact_payoff(spec, random_local_strategy(rng), ens) <= 1e-9
