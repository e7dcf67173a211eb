import math

import numpy as np
import pytest
from scipy import stats

from pubforge import corpus, forecast
from pubforge.errors import ConfigError
from pubforge.forecast import (
    derive_rng,
    expected_trajectory,
    simulate_group,
    simulate_many,
    simulate_researcher,
)

from conftest import toy_model


class TestSimulateResearcher:
    def test_zero_rate_constant_trajectory(self):
        model = toy_model([0.0, 0.0, 0.0])
        traj, clamped = simulate_researcher(model, 2, 0, 6, derive_rng(0, "a", 0))
        assert (traj == 2).all()
        assert clamped == 0

    def test_inactive_start_rejected(self):
        model = toy_model([1.0])
        with pytest.raises(ConfigError):
            simulate_researcher(model, 0, 0, 3, derive_rng(0, "a", 0))

    def test_one_step_mean(self):
        model = toy_model([0.5] * 5, I_1=5)
        R = 100_000
        traj = simulate_many(model, 1, 0, 1, R, np.random.default_rng(123))
        increments = traj[:, 0] - 1
        assert abs(increments.mean() - 0.5) < 3 * math.sqrt(0.5 / R)

    def test_two_steps_superpose_to_poisson(self):
        # cohort-independent rate c: the two-step increment is Pois(2c)
        c = 0.8
        model = toy_model([c] * 30, I_1=30)
        R = 50_000
        traj = simulate_many(model, 1, 0, 2, R, np.random.default_rng(99))
        increments = traj[:, 1] - 1
        ks = np.arange(increments.max() + 1)
        ecdf = (increments[:, None] <= ks[None, :]).mean(axis=0)
        pcdf = stats.poisson.cdf(ks, 2 * c)
        # Dvoretzky-Kiefer-Wolfowitz bound at alpha = 1e-6
        bound = math.sqrt(math.log(2 / 1e-6) / (2 * R))
        assert np.abs(ecdf - pcdf).max() < bound

    def test_trajectories_non_decreasing(self):
        model = toy_model([0.4, 0.9, 1.3], betas=[0.05, 0.0, -0.05])
        for rep in range(20):
            traj, _ = simulate_researcher(model, 1, 0, 10, derive_rng(4, "b", rep))
            assert (np.diff(traj) >= 0).all()

    def test_clamp_tally_counts_overflow_lookups(self):
        model = toy_model([50.0], I_1=1)   # huge rate forces h past I_1 fast
        traj, clamped = simulate_researcher(model, 1, 0, 5, derive_rng(1, "c", 0))
        assert clamped >= 4


def _split_and_histories(pubs):
    records = []
    for aid, years in pubs.items():
        for k, y in enumerate(years):
            records.append(corpus.PublicationRecord(aid, y, "V", f"{aid}/{k}"))
    histories = corpus.build_histories(records)
    split = corpus.make_split(
        histories, "test",
        history_window=(1990, 2000), response_window=(2003, 2008),
    )
    return split, histories


class TestSimulateGroup:
    def _model(self):
        return toy_model([0.5, 0.8, 1.0], t0=2000, J=8)

    def test_same_seed_identical(self):
        split, histories = _split_and_histories({
            "A": [1995, 2003], "B": [2003], "C": [1999, 2001, 2003],
        })
        model = self._model()
        e1 = simulate_group(model, split, histories, R=20, seed=42)
        e2 = simulate_group(model, split, histories, R=20, seed=42)
        for aid in e1.trajectories:
            assert np.array_equal(e1.trajectories[aid], e2.trajectories[aid])

    def test_first_replicate_independent_of_R(self):
        split, histories = _split_and_histories({"A": [1995, 2003]})
        model = self._model()
        e1 = simulate_group(model, split, histories, R=1, seed=7)
        e2 = simulate_group(model, split, histories, R=2, seed=7)
        assert np.array_equal(e1.trajectories["A"][0], e2.trajectories["A"][0])

    def test_exclusion_tally(self):
        split, histories = _split_and_histories({
            "Heavy": [1995] * 1 + [1996, 1997, 1998, 2003],   # 5 pubs by 2003 > I_1
            "Ok": [2003],
            "Fresh": [2004],    # not in split (no pub at t_X = 2003)
        })
        # Heavy has 5 distinct pubs <= 2003; I_1 = 3
        model = self._model()
        ensemble = simulate_group(model, split, histories, R=5, seed=0)
        assert set(ensemble.excluded) == {"Heavy"}
        assert set(ensemble.trajectories) == {"Ok"}
        # hand count: researchers with h > I_1 at t_X
        over = [a for a in split.authors
                if histories[a].count_in(1990, 2003) > model.I_1]
        assert set(ensemble.excluded) == set(over)

    def test_iteration_order_independent(self):
        split, histories = _split_and_histories({
            "A": [2003], "B": [2003], "C": [2003],
        })
        model = self._model()
        full = simulate_group(model, split, histories, R=3, seed=11)
        solo_split = corpus.DatasetSplit(
            split.history_window, split.response_window,
            frozenset({"B"}), "test",
        )
        solo = simulate_group(model, solo_split, histories, R=3, seed=11)
        assert np.array_equal(full.trajectories["B"], solo.trajectories["B"])


class TestExpectedTrajectory:
    def test_zero_rate(self):
        model = toy_model([0.0, 0.0])
        result = expected_trajectory(model, 1, 0, 4, h_cap=10)
        assert np.allclose(result.means, 1.0)
        assert result.truncation_mass == pytest.approx(0.0, abs=1e-300)

    def test_cohort_independent_rate_is_linear(self):
        c = 0.6
        model = toy_model([c] * 40, I_1=40)
        k = 5
        result = expected_trajectory(model, 2, 0, k, h_cap=60)
        expected = 2 + c * np.arange(1, k + 1)
        assert np.allclose(result.means, expected, atol=1e-9)
        assert not result.truncation_warning

    def test_matches_monte_carlo(self):
        model = toy_model([0.5, 0.9, 1.4], betas=[0.05, 0.0, -0.02])
        dp = expected_trajectory(model, 1, 0, 2, h_cap=80)
        R = 200_000
        traj = simulate_many(model, 1, 0, 2, R, np.random.default_rng(2024))
        mc_mean = traj.mean(axis=0)
        mc_se = traj.std(axis=0) / math.sqrt(R)
        assert np.all(np.abs(mc_mean - dp.means) < 4 * mc_se)

    def test_h_cap_below_i1_rejected(self):
        model = toy_model([1.0] * 5, I_1=5)
        with pytest.raises(ConfigError):
            expected_trajectory(model, 1, 0, 2, h_cap=3)

    def test_truncation_warning_flag(self):
        model = toy_model([20.0], I_1=1)
        result = expected_trajectory(model, 1, 0, 3, h_cap=5)
        assert result.truncation_warning
        assert result.truncation_mass > 1e-6


class TestDeterminism:
    def test_seed_author_replicate_fully_determines_stream(self):
        model = toy_model([0.9, 1.1])
        a = simulate_researcher(model, 1, 0, 8, derive_rng(3, "X", 5))[0]
        b = simulate_researcher(model, 1, 0, 8, derive_rng(3, "X", 5))[0]
        c = simulate_researcher(model, 1, 0, 8, derive_rng(3, "X", 6))[0]
        d = simulate_researcher(model, 1, 0, 8, derive_rng(4, "X", 5))[0]
        assert np.array_equal(a, b)
        assert not (np.array_equal(a, c) and np.array_equal(a, d))


class TestEnsembleExport:
    def test_export_format(self, tmp_path):
        split, histories = _split_and_histories({"A": [2003]})
        model = toy_model([0.5, 0.8, 1.0], t0=2000, J=8)
        ensemble = simulate_group(model, split, histories, R=50, seed=1)
        path = tmp_path / "ensemble.csv"
        forecast.write_ensemble(ensemble, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "author_id,year,mean,q05,q95"
        assert len(lines) == 1 + len(ensemble.years)
        rep_path = tmp_path / "replicates.csv"
        forecast.write_replicates(ensemble, rep_path)
        rep_lines = rep_path.read_text().splitlines()
        assert rep_lines[0] == "author_id,replicate,year,h"
        assert len(rep_lines) == 1 + 50 * len(ensemble.years)
