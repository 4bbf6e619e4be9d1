import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pulsesim.collapse import (
    CollapsePath,
    collapsed_state,
    compose_conscious_prior,
    dissolve_into_pulse,
    reduce_system,
    sample_collapse,
    selection_probabilities,
)
from pulsesim.experiment import frequency_check
from pulsesim.rng import ReplayStream, ReproducibilityError, TrialStream
from pulsesim.state import (
    ContractError,
    Phase,
    PulseKernel,
    ReceptorDistribution,
    StimulusProfile,
    initial_state,
)

SQRT_HALF = math.sqrt(0.5)


def dist(u, w, u0=None):
    return ReceptorDistribution(u, w, u[0] if u0 is None else u0).normalized()


def composed_oracle(u_values, r, kernel_amps, offsets):
    """Explicit sum over u of R_u F_u(u') with a dictionary accumulator."""
    acc = {}
    for u, ru in zip(u_values, r):
        for k, f in zip(offsets, kernel_amps):
            acc[u + k] = acc.get(u + k, 0.0) + ru * f
    grid = sorted(acc)
    return np.array(grid, dtype=float), np.array([acc[g] for g in grid])


def draw_many(state, seed, n):
    return [sample_collapse(state, TrialStream(seed, i)) for i in range(n)]


class TestSelectionProbabilities:
    @pytest.mark.parametrize(
        "w, expected",
        [([1, 0, 0], [1, 0, 0]), ([SQRT_HALF, SQRT_HALF], [0.5, 0.5]), ([0.6, 0.8], [0.36, 0.64])],
    )
    def test_examples(self, w, expected):
        d = ReceptorDistribution(list(range(len(w))), w, 0)
        np.testing.assert_allclose(selection_probabilities(d), expected, atol=1e-15)

    def test_unnormalized_is_contract_error(self):
        with pytest.raises(ContractError):
            selection_probabilities(ReceptorDistribution([0, 1], [1, 1], 0))

    @given(st.lists(st.floats(min_value=1e-6, max_value=10), min_size=1, max_size=30))
    def test_total_is_one(self, w):
        p = selection_probabilities(dist(list(range(len(w))), w))
        assert abs(p.sum() - 1.0) < 1e-9


class TestComposeConsciousPrior:
    def test_three_point_example_against_double_loop(self):
        kernel = PulseKernel(1.0, 1, profile=(0.5, SQRT_HALF, 0.5))
        d = ReceptorDistribution([0, 1], [0.6, 0.8], 0)
        prior = compose_conscious_prior(d, kernel)
        grid, raw = composed_oracle([0, 1], [0.6, 0.8], kernel.amplitudes(), [-1, 0, 1])
        np.testing.assert_array_equal(prior.u_values, grid)
        np.testing.assert_allclose(prior.raw_weights, raw, rtol=1e-14)
        np.testing.assert_allclose(prior.raw_weights, [0.3, 0.824, 0.866, 0.4], atol=5e-4)
        np.testing.assert_allclose(prior.weights, raw / np.linalg.norm(raw), rtol=1e-14)

    def test_delta_distribution_reproduces_kernel(self):
        kernel = PulseKernel(1.3, 4)
        prior = compose_conscious_prior(ReceptorDistribution([7], [1.0], 7), kernel)
        np.testing.assert_array_equal(prior.u_values, 7 + np.arange(-4, 5))
        np.testing.assert_allclose(prior.weights, kernel.amplitudes(), rtol=1e-15)

    def test_uniform_long_grid_is_flat_in_interior(self):
        kernel = PulseKernel(1.0, 3)
        u = list(range(200))
        prior = compose_conscious_prior(dist(u, [1.0] * 200), kernel)
        interior = prior.weights[10:-10]
        np.testing.assert_allclose(interior, interior[0], rtol=1e-9)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=1, max_size=8).filter(any),
        st.floats(min_value=0.2, max_value=4.0),
        st.integers(min_value=1, max_value=5),
    )
    @settings(max_examples=50)
    def test_matches_oracle(self, w, sigma, radius):
        d = dist(list(range(0, 2 * len(w), 2)), w)
        kernel = PulseKernel(sigma, radius)
        prior = compose_conscious_prior(d, kernel)
        grid, raw = composed_oracle(d.u_values.tolist(), d.weights, kernel.amplitudes(),
                                    list(range(-radius, radius + 1)))
        np.testing.assert_array_equal(prior.u_values, grid)
        np.testing.assert_allclose(prior.raw_weights, raw, rtol=1e-12, atol=1e-300)

    def test_half_step_grid(self):
        kernel = PulseKernel(1.0, 2)
        prior = compose_conscious_prior(ReceptorDistribution([0, 1], [0.6, 0.8], 0), kernel, 0.5)
        np.testing.assert_allclose(prior.u_values, np.arange(-1.0, 2.01, 0.5))


class TestSampleCollapse:
    def test_deterministic_support(self):
        state = initial_state(ReceptorDistribution([3, 4, 5], [1.0, 0.0, 0.0], 3))
        outs = draw_many(state, 99, 500)
        assert {o.u_sc for o in outs} == {3.0}
        assert all(o.raw_weight_sq == 1.0 and o.path is CollapsePath.UNCONSCIOUS for o in outs)

    def test_two_point_frequencies(self):
        state = initial_state(ReceptorDistribution([0, 1], [SQRT_HALF, SQRT_HALF], 0))
        n = 100_000
        outs = draw_many(state, 2024, n)
        freq = sum(o.u_sc == 0.0 for o in outs) / n
        # 3 sigma binomial half-width for p = 0.5, N = 1e5
        assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / n)
        assert abs(freq - 0.5) < 0.005

    @pytest.mark.parametrize("ramp", ["linear", "sine"])
    def test_hit_time_distribution(self, ramp):
        T = 0.25
        state = initial_state(ReceptorDistribution([0], [1.0], 0), StimulusProfile(rise_time=T, ramp=ramp))
        ts = np.array([o.t_sc for o in draw_many(state, 11, 100_000)])
        assert ts.min() > 0 and ts.max() <= T
        if ramp == "linear":
            cdf = lambda t: (np.clip(t, 0, T) / T) ** 2  # noqa: E731
        else:
            cdf = lambda t: np.sin(0.5 * np.pi * np.clip(t, 0, T) / T) ** 2  # noqa: E731
        assert stats.kstest(ts, cdf).statistic < 0.01

    def test_zero_probability_sites_never_chosen(self):
        state = initial_state(ReceptorDistribution([0, 1, 2, 3], [0.0, 0.6, 0.0, 0.8], 1))
        for x in (0.0, 0.3599999, 0.36, 0.999999999):
            out = sample_collapse(state, ReplayStream([x, 0.5]))
            assert out.u_sc in (1.0, 3.0)

    def test_exhausted_stream(self):
        state = initial_state(ReceptorDistribution([0, 1], [0.6, 0.8], 0))
        with pytest.raises(ReproducibilityError):
            sample_collapse(state, TrialStream(1, 0, budget=1))
        with pytest.raises(ReproducibilityError):
            sample_collapse(state, ReplayStream([0.2]))

    def test_requires_pre_hit(self):
        state = initial_state(ReceptorDistribution([0], [1.0], 0))
        pulsed = reduce_system(state, TrialStream(0, 0), PulseKernel(1.0, 2))
        with pytest.raises(ContractError):
            sample_collapse(pulsed, TrialStream(0, 1))

    @given(
        st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=2, max_size=6),
        st.integers(min_value=0, max_value=2**32),
    )
    @settings(max_examples=15, deadline=None)
    def test_born_rule_fidelity(self, w, seed):
        d = dist(list(range(len(w))), w)
        state = initial_state(d)
        n = 10_000
        counts = np.bincount([o.index for o in draw_many(state, seed, n)], minlength=len(w))
        # 4 sigma here: many hypothesis examples x bins would otherwise trip 3 sigma by chance
        check = frequency_check(counts, selection_probabilities(d), n_sigma=4.0)
        assert check.passed and not check.underpowered


class TestDissolveAndReduce:
    def test_delta_kernel(self):
        state = initial_state(ReceptorDistribution([5], [1.0], 5))
        out = sample_collapse(state, TrialStream(0, 0))
        brain, phys = dissolve_into_pulse(out, PulseKernel(1e-6, 1), 1.0)
        np.testing.assert_array_equal(brain.weights, [0.0, 1.0, 0.0])
        np.testing.assert_array_equal(brain.u_grid, [4.0, 5.0, 6.0])

    def test_gaussian_kernel_shape(self):
        state = initial_state(ReceptorDistribution([0], [1.0], 0))
        out = sample_collapse(state, TrialStream(0, 0))
        brain, phys = dissolve_into_pulse(out, PulseKernel(1.0, 3), 1.0)
        d = np.arange(-3, 4)
        expected = np.exp(-d**2 / 4.0)
        np.testing.assert_allclose(brain.weights, expected / np.linalg.norm(expected), rtol=1e-14)
        assert brain.weights.argmax() == 3
        assert brain.weights is phys.weights
        np.testing.assert_array_equal(brain.weights, phys.weights)
        assert brain.kind.value == "brain" and phys.kind.value == "physiological"

    def test_grid_step_must_be_positive(self):
        state = initial_state(ReceptorDistribution([0], [1.0], 0))
        out = sample_collapse(state, TrialStream(0, 0))
        with pytest.raises(ContractError):
            dissolve_into_pulse(out, PulseKernel(1.0, 3), 0.0)

    def test_reduce_deterministic_case(self):
        state = initial_state(ReceptorDistribution([2, 3, 4], [1.0, 0.0, 0.0], 2))
        pulsed = reduce_system(state, TrialStream(5, 5), PulseKernel(1.0, 2))
        assert pulsed.phase is Phase.PULSED
        assert pulsed.pre_branch_weight_sq == 0.0
        assert pulsed.brain_pulse.center == 2.0
        assert pulsed.collapse.u_sc == 2.0 and pulsed.collapse.raw_weight_sq == 1.0
        assert 0 < pulsed.t == pulsed.collapse.t_sc <= state.stimulus.rise_time

    def test_collapsed_stage(self):
        state = initial_state(ReceptorDistribution([0, 1], [0.6, 0.8], 0))
        out = sample_collapse(state, TrialStream(1, 1))
        c = collapsed_state(state, out)
        assert c.phase is Phase.COLLAPSED and c.brain_pulse is None and c.pre_branch_weight_sq == 0.0

    def test_conscious_path_matches_unconscious_for_near_delta_kernel(self):
        d = dist([10, 11, 12, 13], [1, 3, 2, 0.5])
        kernel = PulseKernel(1e-3, 2)
        prior = compose_conscious_prior(d, kernel)
        s_u, s_c = initial_state(d), initial_state(prior)
        for i in range(2000):
            a = reduce_system(s_u, TrialStream(8, i), kernel)
            b = reduce_system(s_c, TrialStream(8, i), kernel)
            assert a.collapse.u_sc == b.collapse.u_sc
            assert b.collapse.path is CollapsePath.CONSCIOUS_PRIOR

    def test_conscious_ensemble_matches_composed_prior(self):
        d = dist([0, 2, 3], [0.5, 1.0, 0.7])
        kernel = PulseKernel(1.0, 2)
        prior = compose_conscious_prior(d, kernel)
        grid, raw = composed_oracle([0, 2, 3], d.weights, kernel.amplitudes(), [-2, -1, 0, 1, 2])
        probs = raw**2 / np.sum(raw**2)
        state = initial_state(prior)
        n = 100_000
        idx = [sample_collapse(state, TrialStream(77, i)).index for i in range(n)]
        check = frequency_check(np.bincount(idx, minlength=grid.size), probs)
        assert check.passed, (check.freqs, probs)

    def test_determinism(self):
        state = initial_state(ReceptorDistribution([0, 1, 2], [0.3, 0.5, 0.6], 0).normalized())
        a = reduce_system(state, TrialStream(123, 9), PulseKernel(1.0, 3))
        b = reduce_system(state, TrialStream(123, 9), PulseKernel(1.0, 3))
        assert a.collapse == b.collapse
        assert replace(a.collapse) == b.collapse
