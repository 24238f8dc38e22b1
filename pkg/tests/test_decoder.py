import itertools
import math
import warnings

import numpy as np
import pytest

from inkscribe.ctc import BLANK, collapse, greedy_decode
from inkscribe.decoder import (
    DecodeConfig,
    Region,
    beam_search,
    beam_search_hypotheses,
    brute_force_decode,
    frame_candidates,
    region_paths,
    split_regions,
    transcription_score,
)
from inkscribe.langmodel import lm_logprob, train_ngram

EXACT = DecodeConfig(threshold=0.0, beam_width=10_000, lm_weight=0.0)


def random_post(rng, T, K, sharp=1.0):
    return rng.dirichlet(np.full(K, sharp), size=T)


class TestCandidates:
    def test_threshold_zero_keeps_everything(self):
        post = random_post(np.random.default_rng(0), 3, 4)
        assert frame_candidates(post, 0.0) == [(0, 1, 2, 3)] * 3

    def test_high_threshold_gives_singletons(self):
        post = np.array([[0.9995, 0.0005], [0.0002, 0.9998]])
        assert frame_candidates(post, 0.999) == [(0,), (1,)]

    def test_direct_comparison(self):
        assert frame_candidates(np.array([[0.7, 0.2, 0.1]]), 0.15) == [(0, 1)]

    def test_empty_set_falls_back_to_argmax(self):
        assert frame_candidates(np.array([[0.3, 0.3, 0.4]]), 0.5) == [(2,)]


class TestRegions:
    def test_two_regions(self):
        regions = split_regions([(0,), (1,), (1, 2), (0,), (3,)])
        assert [(r.start, r.stop) for r in regions] == [(1, 3), (4, 5)]

    def test_single_region(self):
        regions = split_regions([(0, 1), (1,), (2,)])
        assert [(r.start, r.stop) for r in regions] == [(0, 3)]

    def test_all_blank(self):
        assert split_regions([(0,), (0,)]) == []
        post = np.array([[0.9999, 0.0001]] * 3)
        assert beam_search(post, None, DecodeConfig(threshold=0.01)) == ()

    def test_single_frame_region(self):
        post = np.array([[0.1, 0.6, 0.3]])
        partials, exact = region_paths(Region(0, 1, ((1, 2),)), post)
        assert exact
        assert partials.keys() == {(1,), (2,)}
        assert math.exp(partials[(1,)]) == pytest.approx(0.6)

    def test_repeat_collapses(self):
        post = np.array([[0.2, 0.8], [0.4, 0.6]])
        partials, _ = region_paths(Region(0, 2, ((1,), (1,))), post)
        assert partials.keys() == {(1,)}
        assert math.exp(partials[(1,)]) == pytest.approx(0.8 * 0.6)

    def test_region_matches_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            T, K = rng.integers(1, 6), 4
            post = random_post(rng, T, K)
            cands = tuple(tuple(sorted(rng.choice(K, size=rng.integers(1, K + 1), replace=False)))
                          for _ in range(T))
            partials, _ = region_paths(Region(0, T, cands), post)
            ref = {}
            for path in itertools.product(*cands):
                key = collapse(path)
                ref[key] = ref.get(key, 0.0) + float(np.prod(post[np.arange(T), path]))
            assert partials.keys() == ref.keys()
            for k, v in ref.items():
                assert math.exp(partials[k]) == pytest.approx(v, rel=1e-12)

    def test_regions_collapse_independently(self):
        # collapsing a concatenation across a blank-only frame equals
        # concatenating the collapsed pieces
        rng = np.random.default_rng(2)
        for _ in range(200):
            a = tuple(rng.integers(0, 3, rng.integers(1, 5)))
            b = tuple(rng.integers(0, 3, rng.integers(1, 5)))
            assert collapse(a + (BLANK,) + b) == collapse(a) + collapse(b)

    def test_cap_falls_back_to_beam(self):
        post = random_post(np.random.default_rng(3), 8, 3)
        region = Region(0, 8, ((0, 1, 2),) * 8)
        partials, exact = region_paths(region, post, cap=100, beam_width=4)
        assert not exact
        assert len(partials) <= 4 * 3
        with pytest.warns(RuntimeWarning):
            beam_search(post, None, DecodeConfig(threshold=0.0, beam_width=4, enum_cap=100))


class TestBeamSearch:
    def test_matches_exhaustive(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            post = random_post(rng, 4, 3, sharp=0.5)
            assert beam_search(post, None, EXACT) == brute_force_decode(post, None, EXACT)

    def test_sum_beats_greedy(self):
        post = np.array([[0.6, 0.4], [0.6, 0.4]])
        assert greedy_decode(post) == ()
        assert beam_search(post, None, EXACT) == (1,)
        best = beam_search_hypotheses(post, None, EXACT)[0]
        assert math.exp(best.acoustic) == pytest.approx(0.64)

    def test_empty_input(self):
        assert beam_search(np.zeros((0, 3)), None, EXACT) == ()
        assert brute_force_decode(np.zeros((0, 3)), None, EXACT) == ()

    def test_language_model_fixes_near_tie(self):
        # frames spell "a" then a near tie between "c" (slightly ahead) and "b"
        post = np.array([
            [0.02, 0.96, 0.01, 0.01],
            [0.96, 0.02, 0.01, 0.01],
            [0.02, 0.01, 0.48, 0.49],
        ])
        symbols = ("a", "b", "c")
        assert greedy_decode(post) == (1, 3)
        lm = train_ngram([("a", "b")] * 50 + [("a", "c")], 2, "katz", vocab=symbols)
        assert lm_logprob(lm, ("a", "b")) > lm_logprob(lm, ("a", "c")) + 1
        cfg = DecodeConfig(threshold=0.005, beam_width=8, lm_weight=1.0)
        assert beam_search(post, lm, cfg, symbols) == (1, 2)
        assert beam_search(post, lm, DecodeConfig(threshold=0.005, lm_weight=0.0), symbols) == (1, 3)

    def test_heavy_lm_picks_lm_favourite(self):
        rng = np.random.default_rng(5)
        symbols = ("a", "b")
        lm = train_ngram([("b", "a")] * 20 + [("a",), ("b",), ("a", "a")], 2, "katz", vocab=symbols)
        post = random_post(rng, 3, 3)
        cfg = DecodeConfig(threshold=0.0, beam_width=10_000, lm_weight=1e6)
        dist = {l for l in itertools.chain.from_iterable(
            itertools.product((1, 2), repeat=n) for n in range(4))}
        best_lm = max(dist, key=lambda l: (lm_logprob(lm, [symbols[i - 1] for i in l]), -len(l)))
        assert beam_search(post, lm, cfg, symbols) == best_lm
        assert brute_force_decode(post, lm, cfg, symbols) == best_lm

    def test_fused_matches_exhaustive(self):
        rng = np.random.default_rng(6)
        symbols = ("a", "b")
        lm = train_ngram([tuple(rng.choice(["a", "b"], size=rng.integers(1, 5))) for _ in range(40)],
                         3, "katz", vocab=symbols)
        for _ in range(40):
            post = random_post(rng, 4, 3, sharp=0.5)
            cfg = DecodeConfig(threshold=0.0, beam_width=10_000, lm_weight=float(rng.uniform(0, 2)),
                               length_bonus=float(rng.normal()))
            assert beam_search(post, lm, cfg, symbols) == brute_force_decode(post, lm, cfg, symbols)

    def test_output_alphabet(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            post = random_post(rng, 8, 5, sharp=0.3)
            cfg = DecodeConfig(threshold=0.05, beam_width=4, lm_weight=0.0)
            out = beam_search(post, None, cfg)
            allowed = set(itertools.chain.from_iterable(frame_candidates(post, 0.05)))
            assert BLANK not in out
            assert set(out) <= allowed

    def test_wider_beam_never_scores_lower(self):
        # regions here stay under the enumeration cap, so only the
        # cross-region top-N pruning depends on the width
        rng = np.random.default_rng(8)
        symbols = tuple("abc")
        lm = train_ngram([tuple(rng.choice(list(symbols), size=rng.integers(1, 6))) for _ in range(60)],
                         2, "katz", vocab=symbols)
        for _ in range(60):
            post = random_post(rng, 8, 4, sharp=0.4)
            scores = []
            for width in (1, 2, 4, 8, 32, 128):
                cfg = DecodeConfig(threshold=0.02, beam_width=width, lm_weight=0.5, enum_cap=10**7)
                scores.append(beam_search_hypotheses(post, lm, cfg, symbols)[0].score)
            assert all(b >= a - 1e-9 for a, b in zip(scores, scores[1:]))

    def test_score_decomposition(self):
        rng = np.random.default_rng(9)
        symbols = ("a", "b")
        lm = train_ngram([("a", "b"), ("b",), ("a", "a", "b")], 2, "katz", vocab=symbols)
        cfg = DecodeConfig(threshold=0.0, beam_width=50, lm_weight=0.7, length_bonus=0.3)
        post = random_post(rng, 3, 3)
        for h in beam_search_hypotheses(post, lm, cfg, symbols):
            expected = transcription_score(h.labels, h.acoustic, lm, cfg, symbols)
            assert h.score == pytest.approx(expected, abs=1e-12)
            assert h.score == pytest.approx(h.acoustic + cfg.lm_weight * math.log(10) * h.lm
                                            + cfg.length_bonus * len(h.labels), abs=1e-12)

    @pytest.mark.parametrize("kwargs", [dict(threshold=1.0), dict(beam_width=0), dict(lm_weight=-1)])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            DecodeConfig(**kwargs)
