import numpy as np
import pytest

from aida.armodels import DEFAULT_CONTEXT_PROCESSES, generate_context_dataset
from aida.context import (
    ContextBank,
    ContextClassificationError,
    ContextModel,
    bank_from_processes,
    classify_frame,
    forward_message,
    map_context,
    noise_only_scorer,
    update_transition,
)
from aida.dists import Categorical, DirichletCols, Gamma, Gaussian, derive_rng
from aida.infer import InferenceError


def uniform(n):
    return Categorical(np.full(n, 1.0 / n))


class TestForwardMessage:
    def test_uniform_fixed_point(self):
        msg = forward_message(uniform(4), DirichletCols(np.ones((4, 4))))
        np.testing.assert_allclose(msg.probs, 0.25)

    def test_hard_previous_context_selects_column(self):
        alphas = np.ones((4, 4))
        alphas[:, 0] = [9.0, 1.0, 1e-9, 1e-9]
        trans = DirichletCols(alphas)
        prev = Categorical(np.array([1.0, 0.0, 0.0, 0.0]))
        msg = forward_message(prev, trans)
        np.testing.assert_allclose(msg.probs, [0.9, 0.1, 1e-10, 1e-10], atol=1e-9)

    def test_matches_dense_product(self):
        rng = derive_rng(60)
        alphas = rng.uniform(0.2, 5.0, size=(5, 5))
        prev = rng.dirichlet(np.ones(5))
        msg = forward_message(Categorical(prev), DirichletCols(alphas))
        expected = (alphas / alphas.sum(0)) @ prev
        expected /= expected.sum()
        np.testing.assert_allclose(msg.probs, expected, atol=1e-12)
        assert msg.probs.sum() == pytest.approx(1.0, abs=1e-12)


class TestTransitionUpdate:
    def test_hard_beliefs_increment_single_cell(self):
        trans = DirichletCols(np.ones((3, 3)))
        cur = Categorical(np.array([0.0, 1.0, 0.0]))
        prev = Categorical(np.array([1.0, 0.0, 0.0]))
        out = update_transition(trans, cur, prev)
        expected = np.ones((3, 3))
        expected[1, 0] += 1.0
        np.testing.assert_array_equal(out.alphas, expected)

    def test_uniform_beliefs_spread_mass(self):
        trans = DirichletCols(np.ones((4, 4)))
        out = update_transition(trans, uniform(4), uniform(4))
        np.testing.assert_allclose(out.alphas, 1.0 + 1.0 / 16.0)

    def test_recovers_empirical_frequencies(self):
        # oracle: hard-count matrix of a labeled path
        rng = derive_rng(61)
        labels = rng.integers(0, 3, size=400)
        trans = DirichletCols(np.ones((3, 3)))
        counts = np.zeros((3, 3))
        for prev, cur in zip(labels[:-1], labels[1:]):
            e_prev = np.zeros(3)
            e_prev[prev] = 1.0
            e_cur = np.zeros(3)
            e_cur[cur] = 1.0
            trans = update_transition(trans, Categorical(e_cur), Categorical(e_prev))
            counts[cur, prev] += 1.0
        np.testing.assert_allclose(trans.alphas, 1.0 + counts)
        emp = (counts + 1) / (counts + 1).sum(0)
        np.testing.assert_allclose(trans.mean_matrix(), emp, atol=1e-12)


class TestMapContext:
    def test_argmax(self):
        assert map_context(Categorical(np.array([0.1, 0.7, 0.2]))) == 1

    def test_tie_breaks_low_index(self):
        assert map_context(Categorical(np.array([0.5, 0.5]))) == 0


class TestClassifyFrame:
    def test_single_model_bank(self):
        bank = ContextBank(
            (ContextModel("only", Gaussian([0.0], [[1.0]]), Gamma(1.0, 1.0)),)
        )
        frame = derive_rng(62).standard_normal(50)
        belief = classify_frame(
            frame, bank, bank.uniform_belief(), bank.flat_transition(),
            noise_only_scorer(bank),
        )
        np.testing.assert_allclose(belief.posterior.probs, [1.0])

    def test_equal_scores_return_forward_message(self):
        bank = bank_from_processes(DEFAULT_CONTEXT_PROCESSES[:2], include_extras=False)
        alphas = np.array([[3.0, 1.0], [1.0, 2.0]])
        trans = DirichletCols(alphas)
        prev = Categorical(np.array([0.7, 0.3]))
        belief = classify_frame(
            np.zeros(30), bank, prev, trans, scorer=lambda frame, i: 123.4
        )
        expected = forward_message(prev, trans).probs
        np.testing.assert_allclose(belief.posterior.probs, expected, atol=1e-12)

    def test_shift_invariance_and_large_spread(self):
        bank = bank_from_processes(DEFAULT_CONTEXT_PROCESSES, include_extras=False)
        scores = np.array([1e4, 0.0, 2e3, 9e3])

        def scorer(frame, i, base=0.0):
            return scores[i] + base

        b1 = classify_frame(
            np.zeros(10), bank, bank.uniform_belief(), bank.flat_transition(), scorer
        )
        b2 = classify_frame(
            np.zeros(10), bank, bank.uniform_belief(), bank.flat_transition(),
            lambda frame, i: scorer(frame, i, base=5e3),
        )
        np.testing.assert_allclose(b1.posterior.probs, b2.posterior.probs, atol=1e-12)
        assert b1.map_index == 1
        assert np.isfinite(b1.posterior.probs).all()

    def test_failed_model_flagged(self):
        bank = bank_from_processes(DEFAULT_CONTEXT_PROCESSES[:2], include_extras=False)

        def scorer(frame, i):
            if i == 0:
                raise InferenceError("boom")
            return 10.0

        belief = classify_frame(
            np.zeros(10), bank, bank.uniform_belief(), bank.flat_transition(), scorer
        )
        assert belief.failed[0] and not belief.failed[1]
        np.testing.assert_allclose(belief.posterior.probs, [0.0, 1.0])

    def test_all_failed_raises(self):
        bank = bank_from_processes(DEFAULT_CONTEXT_PROCESSES[:2], include_extras=False)

        def scorer(frame, i):
            raise InferenceError("boom")

        with pytest.raises(ContextClassificationError):
            classify_frame(
                np.zeros(10), bank, bank.uniform_belief(), bank.flat_transition(), scorer
            )


class TestSmallScaleAccuracy:
    def test_noise_only_classification(self):
        rng = derive_rng(63)
        frames, labels, _ = generate_context_dataset(
            list(DEFAULT_CONTEXT_PROCESSES), 120, 100, rng
        )
        bank = bank_from_processes(DEFAULT_CONTEXT_PROCESSES)
        belief = bank.uniform_belief()
        trans = bank.flat_transition()
        hits = 0
        prev_tail = None
        for k in range(frames.shape[0]):
            frame = frames[k]
            new_belief = classify_frame(
                frame, bank, belief, trans, noise_only_scorer(bank, prev_tail)
            )
            if new_belief.map_index == labels[k]:
                hits += 1
            trans = update_transition(trans, new_belief.posterior, belief)
            belief = new_belief.posterior
            prev_tail = frame[-8:]
        assert hits / frames.shape[0] >= 0.8
