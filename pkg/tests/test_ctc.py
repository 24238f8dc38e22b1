import itertools
import math

import numpy as np
import pytest

from inkscribe.ctc import (
    BLANK,
    InstanceTooLarge,
    brute_force_distribution,
    brute_force_prob,
    collapse,
    ctc_grad,
    ctc_loss_and_grad,
    ctc_logprob,
    ctc_prob,
    greedy_decode,
)
from inkscribe.netgraph.gradcheck import numeric_grad, rel_error


def random_post(rng, T, K):
    return rng.dirichlet(np.ones(K), size=T)


class TestCollapse:
    def test_apple(self):
        assert "".join(collapse("_a_pp_p_l_ee_", blank="_")) == "apple"

    def test_apple_variant_keeps_blank_separated_repeat(self):
        # "l_ll" is two l's separated by a blank, so this alignment spells
        # "applle"; removing repeats before blanks cannot merge them
        assert "".join(collapse("_aa_p_pl_ll_e", blank="_")) == "applle"
        assert "".join(collapse("_aa_p_pll_e", blank="_")) == "apple"

    def test_all_blank(self):
        assert collapse([0, 0, 0]) == ()

    def test_idempotent_without_adjacent_repeats(self):
        # a blank-separated repeat ("a_a" -> "aa") collapses again on a second
        # pass, so the fixed points are the outputs without adjacent repeats
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(200):
            out = collapse(rng.integers(0, 4, 10))
            if all(a != b for a, b in zip(out, out[1:])):
                assert collapse(out) == out
                checked += 1
        assert checked > 20
        assert collapse(collapse((1, 0, 1))) == (1,)


class TestProbability:
    def test_single_frame(self):
        post = np.array([[0.2, 0.5, 0.3]])
        assert ctc_prob(post, [1]) == pytest.approx(0.5, rel=1e-14)

    def test_two_frames(self):
        post = np.array([[0.1, 0.6, 0.3], [0.5, 0.2, 0.3]])
        p1, p2 = post
        expected = p1[1] * p2[1] + p1[1] * p2[0] + p1[0] * p2[1]
        assert ctc_prob(post, [1]) == pytest.approx(expected, rel=1e-14)

    def test_repeat_needs_blank(self):
        post = np.array([[0.3, 0.7], [0.4, 0.6]])
        assert ctc_prob(post, [1, 1]) == 0.0
        assert brute_force_prob(post, [1, 1]) == 0.0
        loss, grad, _ = ctc_loss_and_grad(post, [1, 1])
        assert loss == math.inf and not grad.any()

    def test_too_long(self):
        post = random_post(np.random.default_rng(0), 2, 3)
        assert ctc_prob(post, [1, 2, 1]) == 0.0

    def test_matches_enumeration(self):
        rng = np.random.default_rng(1)
        post = random_post(rng, 5, 4)
        for n in range(4):
            for label in itertools.product(range(1, 4), repeat=n):
                p, q = ctc_prob(post, label), brute_force_prob(post, label)
                assert p == pytest.approx(q, rel=1e-10, abs=1e-300)

    def test_total_probability(self):
        rng = np.random.default_rng(2)
        post = random_post(rng, 5, 3)
        dist = brute_force_distribution(post)
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
        assert sum(ctc_prob(post, l) for l in dist) == pytest.approx(1.0, abs=1e-9)

    def test_long_sequence_is_finite(self):
        rng = np.random.default_rng(3)
        post = np.maximum(random_post(rng, 400, 5), 1e-300)
        post /= post.sum(axis=1, keepdims=True)
        lp = ctc_logprob(post, list(rng.integers(1, 5, 60)))
        assert math.isfinite(lp) and lp < 0

    def test_brute_force_refuses_large(self):
        with pytest.raises(InstanceTooLarge):
            brute_force_prob(np.full((20, 5), 0.2), [1])

    def test_empty_sequence(self):
        assert ctc_prob(np.zeros((0, 3)), []) == 1.0
        assert ctc_prob(np.zeros((0, 3)), [1]) == 0.0


class TestGradient:
    def test_finite_differences(self):
        rng = np.random.default_rng(4)
        for label in [(1,), (1, 2), (2, 2), (1, 2, 1)]:
            post = random_post(rng, 6, 3)
            f = lambda: -math.log(ctc_prob(post, label))
            num = numeric_grad(f, post, 1e-7)
            assert rel_error(ctc_grad(post, label), num) < 1e-6

    def test_absent_symbols_have_zero_gradient(self):
        post = np.array([[0.2, 0.5, 0.3]])
        g = ctc_grad(post, [1])
        assert g[0, 2] == 0.0 and g[0, 0] == 0.0
        assert g[0, 1] == pytest.approx(-1 / 0.5)

    def test_occupancy_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        post = random_post(rng, 7, 4)
        _, _, occ = ctc_loss_and_grad(post, [3, 1, 3])
        np.testing.assert_allclose(occ.sum(axis=1), 1.0, atol=1e-12)


class TestGreedy:
    def test_one_hot(self):
        post = np.eye(3)[[0, 1, 0, 2]]
        assert greedy_decode(post) == (1, 2)

    def test_uniform_rows_decode_to_blank(self):
        assert greedy_decode(np.full((4, 3), 1 / 3)) == ()

    def test_greedy_is_not_the_most_probable(self):
        post = np.array([[0.6, 0.4], [0.6, 0.4]])
        assert greedy_decode(post) == ()
        assert ctc_prob(post, [1]) == pytest.approx(0.64)
        assert ctc_prob(post, []) == pytest.approx(0.36)
        assert BLANK == 0
