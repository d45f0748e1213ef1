import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boostarena.boosting import (
    BoostConfig,
    BoostState,
    EdgeAssumptionError,
    Ensemble,
    adaboost_round,
    adaboost_train,
    ensemble_predict,
    multiclass_costs,
    multiclass_round,
    multiclass_train,
    round_log_csv,
    train,
    z_factor,
)
from boostarena.weak_learn import ThresholdHypothesis, WeightedSupport, enumerate_candidates

PTS = (0.9, 1.4, 1.9)
A2 = (1, -1)
A3 = ("a1", "a2", "a3")


@pytest.fixture
def non_monotone():
    return WeightedSupport.uniform(PTS, (1, -1, 1), A2)


class TestAdaBoostRound:
    def test_first_round(self, non_monotone):
        s = non_monotone
        state = adaboost_round(BoostState.initial(s), s, enumerate_candidates(PTS, A2))
        rec = state.round_log[0]
        assert rec.epsilon_or_cost == pytest.approx(1 / 3)
        assert rec.alpha_or_eta == pytest.approx(0.5 * math.log(2))
        assert rec.z_or_ltilde == pytest.approx(math.sqrt(8 / 9), abs=1e-12)
        h = state.hypotheses[0]
        miss = [i for i, p in enumerate(PTS) if h(p) != s.labels[i]]
        assert len(miss) == 1
        expected = np.full(3, 0.25)
        expected[miss[0]] = 0.5
        np.testing.assert_allclose(state.distribution, expected, atol=1e-12)

    def test_zero_error_terminal(self):
        s = WeightedSupport.uniform(PTS, (1, -1, -1), A2)
        state = adaboost_round(BoostState.initial(s), s, enumerate_candidates(PTS, A2))
        assert state.terminal
        assert state.alphas == (1.0,)
        assert state.train_error(s) == 0.0

    def test_zero_error_terminal_under_rounding(self):
        # these weights sum to 1 - 1.1e-16, so 1 - accuracy is not exactly 0
        s = WeightedSupport(PTS, np.array([0.3, 0.4, 1 - 0.3 - 0.4]), (1, -1, -1), A2)
        state = adaboost_round(BoostState.initial(s), s, enumerate_candidates(PTS, A2))
        assert state.terminal
        assert state.round_log[0].z_or_ltilde == 0.0

    def test_needs_two_actions(self):
        s = WeightedSupport.uniform(PTS, A3, A3)
        with pytest.raises(ValueError):
            adaboost_round(BoostState.initial(s), s, enumerate_candidates(PTS, A3))


class TestAdaBoostTrain:
    def test_non_monotone_fixture(self, non_monotone):
        ens, state = adaboost_train(non_monotone, enumerate_candidates(PTS, A2), return_state=True)
        assert state.round <= 10
        assert [ensemble_predict(ens, p) for p in PTS] == [1, -1, 1]
        assert ensemble_predict(ens, 1.4) == -1

    @pytest.mark.parametrize("labels", [(1, -1, -1), (1, 1, 1), (-1, -1, -1)])
    def test_single_hypothesis(self, labels):
        s = WeightedSupport.uniform(PTS, labels, A2)
        ens = adaboost_train(s, enumerate_candidates(PTS, A2))
        assert len(ens) == 1
        assert [ensemble_predict(ens, p) for p in PTS] == list(labels)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 7), st.data())
    def test_identities(self, m, data):
        labels = tuple(data.draw(st.sampled_from(A2)) for _ in range(m))
        w = np.array([data.draw(st.integers(1, 9)) for _ in range(m)], dtype=float)
        s = WeightedSupport(tuple(float(i) for i in range(m)), w / w.sum(), labels, A2)
        cfg = BoostConfig(max_rounds=30, stop_on_zero_error=False)
        _, state = adaboost_train(s, enumerate_candidates(s.points, A2), cfg, return_state=True)
        prod = 1.0
        for rec in state.round_log:
            if rec.epsilon_or_cost == 0.0:
                assert rec.train_error == 0.0
                break
            gamma = 0.5 - rec.epsilon_or_cost
            assert rec.z_or_ltilde == pytest.approx(math.sqrt(1 - 4 * gamma ** 2), abs=1e-9)
            prod *= rec.z_or_ltilde
            assert rec.train_error <= prod + 1e-12
        assert abs(state.distribution.sum() - 1.0) <= 1e-9
        assert np.all(state.distribution >= 0)

    def test_round_log_csv(self, non_monotone):
        _, state = adaboost_train(non_monotone, enumerate_candidates(PTS, A2), return_state=True)
        lines = round_log_csv(state.round_log).splitlines()
        assert lines[0] == "round,epsilon_or_cost,alpha_or_eta,Z_or_Ltilde,train_error"
        assert len(lines) == 1 + state.round


class TestEnsemble:
    def test_weighted_vote(self):
        h1 = ThresholdHypothesis((1.0,), -10.0, 1, 1)
        h2 = ThresholdHypothesis((1.0,), -10.0, -1, -1)
        assert ensemble_predict(Ensemble((h1, h2), (0.6, 0.4), A2), 0.0) == 1
        assert ensemble_predict(Ensemble((h2, h1), (0.5, 0.5), A2), 0.0) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            ensemble_predict(Ensemble((), (), A2), 0.0)

    def test_json_roundtrip(self, non_monotone):
        ens = adaboost_train(non_monotone, enumerate_candidates(PTS, A2))
        back = Ensemble.from_json(ens.to_json())
        np.testing.assert_array_equal(back.predict_indices(PTS), ens.predict_indices(PTS))


class TestMulticlass:
    def test_eta_from_gamma(self):
        assert math.log1p(0.2) == pytest.approx(0.182322, abs=1e-6)

    def test_initial_loss(self):
        s = WeightedSupport.uniform(PTS, A3, A3)
        # every wrong label contributes e^0 = 1 at F = 0
        costs = multiclass_costs(np.zeros((3, 3)), s.label_index, 0.3)
        np.testing.assert_allclose(np.diag(costs), (math.exp(-0.3) - 1) * 2)
        state = multiclass_round(BoostState.initial(s), s, enumerate_candidates(PTS, A3), 0.3)
        assert state.round_log[0].z_or_ltilde <= 2.0

    def test_correct_point_loss_shrinks(self):
        s = WeightedSupport.uniform((0.0,), ("a2",), A3)
        eta = math.log1p(0.5)
        state = multiclass_round(BoostState.initial(s), s, enumerate_candidates(s.points, A3), eta)
        assert state.round_log[0].z_or_ltilde == pytest.approx(2 * math.exp(-eta))
        assert state.train_error(s) == 0.0

    def test_distinct_labels(self):
        s = WeightedSupport.uniform(PTS, A3, A3)
        cands = enumerate_candidates(PTS, A3)
        ens, state = multiclass_train(s, cands, return_state=True)
        assert [ensemble_predict(ens, p) for p in PTS] == list(A3)
        gamma = state.gamma
        assert state.round <= (2 / gamma ** 2) * math.log(2) + 1
        for rec in state.round_log:
            assert rec.train_error <= rec.z_or_ltilde + 1e-12
            assert rec.z_or_ltilde <= 2 * math.exp(-gamma ** 2 * rec.round / 2) + 1e-12

    def test_single_point(self):
        s = WeightedSupport.uniform((1.0,), ("a3",), A3)
        ens, state = multiclass_train(s, enumerate_candidates(s.points, A3), return_state=True)
        assert state.round == 1
        assert ensemble_predict(ens, 1.0) == "a3"

    def test_binary_matches_adaboost(self, non_monotone):
        cands = enumerate_candidates(PTS, A2)
        ada = adaboost_train(non_monotone, cands)
        multi = multiclass_train(non_monotone, cands)
        np.testing.assert_array_equal(ada.predict_indices(PTS), multi.predict_indices(PTS))

    def test_user_gamma_not_adjusted(self):
        s = WeightedSupport.uniform(PTS, A3, A3)
        with pytest.raises(EdgeAssumptionError, match="lower gamma"):
            multiclass_train(s, enumerate_candidates(PTS, A3), BoostConfig(gamma=1.0))

    @pytest.mark.parametrize("gamma", [0.01, 0.1, 0.3, 0.5, 0.9, 1.0])
    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_z_factor_bound(self, k, gamma):
        assert z_factor(k, gamma) <= math.exp(-gamma ** 2 / 2) + 1e-9

    def test_train_dispatch(self, non_monotone):
        _, state = train(non_monotone, enumerate_candidates(PTS, A2))
        assert state.eta == 0.0
        s3 = WeightedSupport.uniform(PTS, A3, A3)
        _, state3 = train(s3, enumerate_candidates(PTS, A3))
        assert state3.eta > 0


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            BoostConfig(max_rounds=0)
        with pytest.raises(ValueError):
            BoostConfig(edge_floor=0.0)
        with pytest.raises(ValueError):
            BoostConfig(gamma=1.5)
