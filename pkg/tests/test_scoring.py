import numpy as np
import pytest
from hypothesis import given, strategies as st

from hand_fixtures import QUERY, THREE_CLASS, THREE_CLASS_P, hierarchy_from_vectors
from sgcnet.errors import DimMismatch, EmptyHierarchy
from sgcnet.hierarchy import ClassHierarchy
from sgcnet.scoring import (
    ScorerConfig,
    classify,
    evaluator_bits,
    fused_score,
    level_scores,
    running_average,
)

scores = st.floats(-1, 1, allow_nan=False)
p_seqs = st.lists(scores, min_size=1, max_size=6)


def entry(vecs):
    return hierarchy_from_vectors([vecs]).classes[0]


class TestLevelScores:
    def test_equal_to_first_level(self):
        e = entry([[0.3, 0.4], [1, 0]])
        assert level_scores([0.3, 0.4], e)[0] == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert level_scores([0, 0, 1], entry([[1, 0, 0], [0, 1, 0]])) == [0.0, 0.0]

    def test_two_level_hand(self):
        p = level_scores(np.array([1, 1]) / np.sqrt(2), entry([[1, 0], [0, 1]]))
        np.testing.assert_allclose(p, [0.70710678, 0.70710678], atol=1e-8)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            level_scores([1, 0, 0], entry([[1, 0]]))


@pytest.mark.parametrize("p,tau,u", [([0.5, 0.7], 0, [1]), ([0.5, 0.5], 0, [0]), ([0.5, 0.7], 0.3, [0]),
                                     ([0.1], 0, [])])
def test_evaluator_bits(p, tau, u):
    assert evaluator_bits(p, tau) == u


@pytest.mark.parametrize("p,u,r", [([0.5], [], 0.5), ([0.5, 0.7], [1], 0.6), ([0.5, 0.4, 0.9], [0, 1], 0.5)])
def test_running_average(p, u, r):
    assert running_average(p, u) == pytest.approx(r, abs=1e-15)


class TestFusedScore:
    def test_lambda_zero_is_initial_score(self):
        e = entry([[1, 0], [0.6, 0.8]])
        b = fused_score([0.8, 0.6], e, ScorerConfig(lam=0.0))
        assert b.s == b.p[0]

    def test_lambda_one_is_running_average(self):
        e = entry([[1, 0], [0.6, 0.8]])
        b = fused_score([0.8, 0.6], e, ScorerConfig(lam=1.0))
        assert b.s == b.r

    def test_hand_value(self):
        # p = [0.5, 0.7] from unit embeddings at the right angles to x = e_x
        x = np.array([1.0, 0.0, 0.0])
        e = entry([[0.5, np.sqrt(0.75), 0], [0.7, 0, np.sqrt(0.51)]])
        b = fused_score(x, e, ScorerConfig(lam=0.5, tau=0.0))
        np.testing.assert_allclose(b.p, [0.5, 0.7], atol=1e-15)
        assert b.u == (1,)
        assert b.s == pytest.approx(0.55, abs=1e-12)

    def test_text_token_offset(self):
        e = entry([[1, 0]])
        b = fused_score([2.0, 0.0], e, ScorerConfig(lam=0.0, text_token=np.array([0.25, 3.0])))
        assert b.base == pytest.approx(1.25)
        assert b.s == pytest.approx(1.25)


class TestClassify:
    def test_exact_match_wins(self):
        h = hierarchy_from_vectors([[[0, 1, 0]], [[1, 0, 0]], [[0, 0, 1]]])
        ranked = classify([1, 0, 0], h, ScorerConfig(lam=1.0))
        assert ranked[0][0] == 1 and ranked[0][1].s == 1.0

    def test_tie_broken_by_id(self):
        h = hierarchy_from_vectors([[[1, 0]], [[1, 0]]])
        ranked = classify([1, 1], h, ScorerConfig())
        assert [cid for cid, _ in ranked] == [0, 1]
        assert ranked[0][1].s == ranked[1][1].s

    def test_three_class_hand_ranking(self):
        h = hierarchy_from_vectors(THREE_CLASS)
        ranked = classify(QUERY, h, ScorerConfig(lam=0.5, tau=0.0))
        for cid, b in ranked:
            np.testing.assert_allclose(b.p, THREE_CLASS_P[cid], atol=1e-12)
        # s = 5/12, 13/18, 2/3
        assert [cid for cid, _ in ranked] == [1, 2, 0]
        assert ranked[0][1].s == pytest.approx(13 / 18, abs=1e-12)
        assert ranked[2][1].s == pytest.approx(5 / 12, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyHierarchy):
            classify([1.0], ClassHierarchy((), 6, 3), ScorerConfig())

    def test_text_token_from_hierarchy(self):
        h = hierarchy_from_vectors([[[1, 0]], [[0, 1]]])
        with_token = ClassHierarchy(h.classes, h.n, h.max_depth, (), np.array([0.0, 5.0]))
        x = np.array([3.0, 4.0])
        plain = dict(classify(x, h, ScorerConfig(lam=0.5)))
        shifted = dict(classify(x, with_token, ScorerConfig(lam=0.5)))
        # shared offset 0.5 * t . x/|x| = 0.5 * 5 * 0.8
        for cid in plain:
            assert shifted[cid].s - plain[cid].s == pytest.approx(2.0, abs=1e-12)

    @given(st.integers(0, 1000))
    def test_lambda_zero_ranks_by_first_level(self, seed):
        rng = np.random.default_rng(seed)
        h = hierarchy_from_vectors([rng.normal(size=(int(rng.integers(1, 4)), 5)) for _ in range(6)])
        x = rng.normal(size=5)
        ranked = classify(x, h, ScorerConfig(lam=0.0))
        p1 = [level_scores(x, c)[0] for c in h.classes]
        assert [cid for cid, _ in ranked] == sorted(range(6), key=lambda i: (-p1[i], i))

    @given(st.integers(0, 1000))
    def test_score_independent_of_other_classes(self, seed):
        rng = np.random.default_rng(seed)
        vecs = [rng.normal(size=(3, 4)) for _ in range(4)]
        x = rng.normal(size=4)
        perm = rng.permutation(4)
        a = dict(classify(x, hierarchy_from_vectors(vecs), ScorerConfig()))
        shuffled = hierarchy_from_vectors([vecs[i] for i in perm])
        b = dict(classify(x, shuffled, ScorerConfig()))
        for new_id, old_id in enumerate(perm):
            assert b[new_id].s == a[old_id].s


@given(p_seqs, st.sampled_from([0.0, 0.05, 0.3]))
def test_r_within_range(p, tau):
    r = running_average(p, evaluator_bits(p, tau))
    assert min(p) - 1e-15 <= r <= max(p) + 1e-15


@given(p_seqs.filter(lambda p: len(p) >= 2), st.sampled_from([0.0, 0.1]))
def test_rejected_first_step_gives_p1(p, tau):
    u = evaluator_bits(p, tau)
    if u[0] == 0:
        assert running_average(p, u) == p[0]


@given(p_seqs, scores, st.sampled_from([0.0, 0.1]))
def test_appending_rejected_level_keeps_r(p, extra, tau):
    if not extra > p[-1] + tau:
        longer = p + [extra]
        assert running_average(longer, evaluator_bits(longer, tau)) == running_average(p, evaluator_bits(p, tau))
