import itertools

import numpy as np
import pytest

from queryscope.assignment import solve_assignment
from queryscope.errors import EvaluationError, QueryscopeError
from queryscope.evaluation import (
    Qrels,
    compute_metric_record,
    coverage_matrix,
    coverage_score,
    diversity_score,
    ir_metrics,
    load_qrels,
    matched_pair_count,
    mean_and_sample_std,
    mean_skipping_none,
    relevancy_score,
    relevant_subset,
)
from queryscope.ranking import RankedList
from queryscope.topics import Topic, TopicSet

from conftest import random_unit_vectors


def topic_set_from_vectors(vectors, query_id="q", strategy="s", model="m"):
    topics = [
        Topic(id=i, doc_ids=[f"d{i}"], top_words=[f"w{i}"],
              representation_embedding=np.asarray(vec, dtype=np.float32))
        for i, vec in enumerate(vectors)
    ]
    return TopicSet(query_id=query_id, strategy=strategy, model=model, topics=topics)


def brute_force_best_total(matrix: np.ndarray) -> float:
    """Exhaustive permutation search oracle for the assignment solver."""
    m, n = matrix.shape
    if m <= n:
        return max(
            sum(matrix[i, cols[i]] for i in range(m))
            for cols in itertools.permutations(range(n), m)
        )
    return brute_force_best_total(matrix.T)


class TestQrels:
    def test_parse_and_grade(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q1 0 docA 2\nq1 0 docB 1\nq2 0 docA 0\n")
        qrels = load_qrels(path)
        assert qrels.grade("q1", "docA") == 2
        assert qrels.grade("q1", "docB") == 1
        assert qrels.grade("q2", "docA") == 0  # explicit zero
        assert qrels.grade("q9", "docZ") == 0  # unjudged
        assert qrels.relevant_ids("q1") == {"docA"}
        assert qrels.relevant_ids("q1", min_grade=1) == {"docA", "docB"}

    def test_bad_grade_rejected(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q1 0 docA 3\n")
        with pytest.raises(EvaluationError, match="grade"):
            load_qrels(path)

    def test_bad_field_count_rejected(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q1 docA 2\n")
        with pytest.raises(EvaluationError, match="4 fields"):
            load_qrels(path)


class TestRelevancy:
    def test_identity_topic(self):
        query = np.array([1.0, 0.0, 0.0])
        topic_set = topic_set_from_vectors([query])
        assert relevancy_score(query, topic_set) == pytest.approx(1.0)

    def test_mean_of_two(self):
        # engineered cosines 0.2 and 0.6 against the x axis
        query = np.array([1.0, 0.0])
        vec1 = np.array([0.2, np.sqrt(1 - 0.04)])
        vec2 = np.array([0.6, np.sqrt(1 - 0.36)])
        topic_set = topic_set_from_vectors([vec1, vec2])
        assert relevancy_score(query, topic_set) == pytest.approx(0.4)

    def test_empty_rejected(self):
        query = np.array([1.0, 0.0])
        empty = TopicSet(query_id="q", strategy="s", model="m", topics=[])
        with pytest.raises(EvaluationError):
            relevancy_score(query, empty)


class TestRelevantSubset:
    def test_boundary_is_inclusive(self):
        query = np.array([1.0, 0.0])
        at_half = np.array([0.5, np.sqrt(0.75)])
        below = np.array([0.49, np.sqrt(1 - 0.49**2)])
        topic_set = topic_set_from_vectors([at_half, below])
        kept = relevant_subset(topic_set, query, threshold=0.5)
        assert [t.id for t in kept.topics] == [0]

    def test_orthogonal_all_excluded(self):
        query = np.array([1.0, 0.0])
        topic_set = topic_set_from_vectors([np.array([0.0, 1.0]), np.array([0.0, -1.0])])
        assert relevant_subset(topic_set, query).topics == []

    def test_threshold_one_keeps_exact_matches(self):
        # power-of-two scaling keeps the unit vector bit-exact in float32
        query = np.array([1.0, 0.0])
        topic_set = topic_set_from_vectors([np.array([2.0, 0.0]), np.array([1.0, 0.25])])
        kept = relevant_subset(topic_set, query, threshold=1.0)
        assert [t.id for t in kept.topics] == [0]


class TestDiversity:
    def test_identical_pair_zero(self):
        vec = np.array([0.3, 0.4])
        assert diversity_score(topic_set_from_vectors([vec, vec])) == pytest.approx(0.0)

    def test_orthogonal_pair_one(self):
        topic_set = topic_set_from_vectors([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        assert diversity_score(topic_set) == pytest.approx(1.0)

    def test_three_orthogonal(self):
        vecs = [np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])]
        assert diversity_score(topic_set_from_vectors(vecs)) == pytest.approx(1.0)

    def test_none_below_two_topics(self):
        assert diversity_score(topic_set_from_vectors([np.array([1.0, 0.0])])) is None
        assert diversity_score(TopicSet(query_id="q", strategy="s", model="m", topics=[])) is None

    def test_permutation_invariant_and_duplicate_never_increases(self):
        # Duplicating an arbitrary topic CAN raise the pairwise mean (an
        # outlier's distances enter again), but duplicating the most
        # central topic never does: its distance total is <= 2S/n, below
        # the 2S/(n-1) break-even point.
        rng = np.random.default_rng(3)
        for _ in range(20):
            vectors = list(random_unit_vectors(rng, int(rng.integers(2, 7)), 5))
            base = diversity_score(topic_set_from_vectors(vectors))
            shuffled = list(vectors)
            rng.shuffle(shuffled)
            assert diversity_score(topic_set_from_vectors(shuffled)) == pytest.approx(base)
            totals = [
                sum(1.0 - float(np.dot(u, v)) for v in vectors if v is not u)
                for u in vectors
            ]
            central = vectors[int(np.argmin(totals))]
            duplicated = vectors + [central]
            assert diversity_score(topic_set_from_vectors(duplicated)) <= base + 1e-12

    def test_duplicating_every_topic_never_increases(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            vectors = list(random_unit_vectors(rng, int(rng.integers(2, 6)), 5))
            base = diversity_score(topic_set_from_vectors(vectors))
            doubled = vectors + [v.copy() for v in vectors]
            assert diversity_score(topic_set_from_vectors(doubled)) <= base + 1e-12

    def test_range(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            vectors = random_unit_vectors(rng, int(rng.integers(2, 8)), 4)
            value = diversity_score(topic_set_from_vectors(list(vectors)))
            assert 0.0 - 1e-12 <= value <= 2.0 + 1e-12


class TestAssignment:
    def test_two_by_two_hand_case(self):
        pairs = solve_assignment(np.array([[0.9, 0.8], [0.85, 0.95]]))
        assert pairs == [(0, 0), (1, 1)]

    def test_identity_matrix(self):
        pairs = solve_assignment(np.eye(4))
        assert pairs == [(i, i) for i in range(4)]

    def test_single_row_argmax(self):
        assert solve_assignment(np.array([[0.1, 0.9, 0.5]])) == [(0, 1)]

    def test_empty_matrix(self):
        assert solve_assignment(np.zeros((0, 0))) == []

    def test_rectangular_shapes(self):
        rng = np.random.default_rng(0)
        for m, n in [(2, 5), (5, 2), (1, 7), (7, 1), (3, 3)]:
            matrix = rng.uniform(size=(m, n))
            pairs = solve_assignment(matrix)
            assert len(pairs) == min(m, n)
            assert len({r for r, _ in pairs}) == len(pairs)
            assert len({c for _, c in pairs}) == len(pairs)

    def test_optimal_total_matches_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(120):
            m = int(rng.integers(1, 6))
            n = int(rng.integers(1, 6))
            matrix = rng.uniform(-1, 1, size=(m, n))
            pairs = solve_assignment(matrix)
            total = sum(matrix[r, c] for r, c in pairs)
            assert total == pytest.approx(brute_force_best_total(matrix), abs=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(QueryscopeError):
            solve_assignment(np.array([[np.nan, 1.0]]))

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        matrix = rng.uniform(size=(6, 6))
        assert solve_assignment(matrix) == solve_assignment(matrix.copy())


def random_topic_sets(rng, dim=8, max_topics=6, near_query_bias=True):
    """Pair of topic sets sharing a query; some topics planted near it."""
    query = random_unit_vectors(rng, 1, dim)[0]
    sets = []
    for label in "ab":
        n = int(rng.integers(0, max_topics + 1))
        vectors = []
        for _ in range(n):
            if near_query_bias and rng.random() < 0.5:
                vec = query + 0.4 * rng.standard_normal(dim)
            else:
                vec = rng.standard_normal(dim)
            vectors.append(vec / np.linalg.norm(vec))
        sets.append(topic_set_from_vectors(vectors, strategy=label))
    return query, sets[0], sets[1]


class TestCoverage:
    def test_self_coverage_is_one(self):
        rng = np.random.default_rng(1)
        query, set_a, _ = random_topic_sets(rng)
        while not relevant_subset(set_a, query).topics:
            query, set_a, _ = random_topic_sets(rng)
        assert coverage_score(set_a, set_a, query) == pytest.approx(1.0)

    def test_all_below_match_threshold_is_zero(self):
        query = np.array([1.0, 0.0, 0.0])
        rel_a = np.array([0.8, 0.6, 0.0])        # relevant, far from rel_b
        rel_b = np.array([0.8, -0.6, 0.0])       # relevant, sim(a,b)=0.28
        set_a = topic_set_from_vectors([rel_a], strategy="a")
        set_b = topic_set_from_vectors([rel_b], strategy="b")
        assert coverage_score(set_a, set_b, query) == 0.0

    def test_half_covered_hand_case(self):
        # relevant(A)={t}, relevant(B)={t, t2} with sim(t, t2) < 0.7
        query = np.array([1.0, 0.0, 0.0])
        t = np.array([0.9, np.sqrt(1 - 0.81), 0.0])
        t2 = np.array([0.9, -np.sqrt(1 - 0.81), 0.0])  # sim(t, t2) = 0.62
        set_a = topic_set_from_vectors([t], strategy="a")
        set_b = topic_set_from_vectors([t, t2], strategy="b")
        assert coverage_score(set_a, set_b, query) == pytest.approx(0.5)

    def test_none_when_b_has_no_relevant(self):
        query = np.array([1.0, 0.0])
        set_a = topic_set_from_vectors([np.array([1.0, 0.0])], strategy="a")
        set_b = topic_set_from_vectors([np.array([0.0, 1.0])], strategy="b")
        assert coverage_score(set_a, set_b, query) is None

    def test_zero_when_a_has_no_relevant(self):
        query = np.array([1.0, 0.0])
        set_a = topic_set_from_vectors([np.array([0.0, 1.0])], strategy="a")
        set_b = topic_set_from_vectors([np.array([1.0, 0.0])], strategy="b")
        assert coverage_score(set_a, set_b, query) == 0.0

    def test_matched_pair_symmetry_identity(self):
        rng = np.random.default_rng(5)
        checked = 0
        while checked < 80:
            query, set_a, set_b = random_topic_sets(rng)
            rel_a = len(relevant_subset(set_a, query).topics)
            rel_b = len(relevant_subset(set_b, query).topics)
            cov_ab = coverage_score(set_a, set_b, query)
            cov_ba = coverage_score(set_b, set_a, query)
            if cov_ab is None or cov_ba is None:
                continue
            checked += 1
            assert cov_ab * rel_b == pytest.approx(cov_ba * rel_a, abs=0)

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(6)
        for _ in range(60):
            query, set_a, set_b = random_topic_sets(rng)
            values = [
                coverage_score(set_a, set_b, query, match_threshold=t)
                for t in (0.5, 0.6, 0.7)
            ]
            present = [v for v in values if v is not None]
            if len(present) == len(values):
                assert values[0] >= values[1] >= values[2]

    def test_range(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            query, set_a, set_b = random_topic_sets(rng)
            value = coverage_score(set_a, set_b, query)
            if value is not None:
                assert 0.0 <= value <= 1.0


class TestMatchedPairCount:
    def test_transpose_consistency(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            matrix = rng.uniform(0, 1, size=(int(rng.integers(1, 7)), int(rng.integers(1, 7))))
            assert matched_pair_count(matrix, 0.6) == matched_pair_count(matrix.T, 0.6)

    def test_cannot_route_through_inadmissible_pairs(self):
        # the 0.69 entries would raise the total but sit below threshold
        matrix = np.array([[0.71, 0.69], [0.69, 0.0]])
        assert matched_pair_count(matrix, 0.7) == 1


class TestIrMetrics:
    def _ranked(self, ids, query_id="q1"):
        return RankedList([(d, float(-i)) for i, d in enumerate(ids)], query_id=query_id)

    def test_planted_counts(self):
        qrels = Qrels({("q1", f"rel{i}"): 2 for i in range(10)})
        ranked_ids = [f"rel{i}" for i in range(5)] + [f"other{i}" for i in range(95)]
        precision, recall = ir_metrics(self._ranked(ranked_ids), qrels, k=20, n=1000)
        assert precision == 5 / 20
        assert recall == 5 / 10

    def test_full_recall(self):
        qrels = Qrels({("q1", f"rel{i}"): 2 for i in range(10)})
        ranked_ids = [f"rel{i}" for i in range(10)] + [f"other{i}" for i in range(90)]
        precision, recall = ir_metrics(self._ranked(ranked_ids), qrels, k=20, n=1000)
        assert precision == 10 / 20
        assert recall == 10 / 10

    def test_short_list_keeps_denominator(self):
        qrels = Qrels({("q1", f"rel{i}"): 2 for i in range(15)})
        ranked_ids = [f"rel{i}" for i in range(15)]
        precision, recall = ir_metrics(self._ranked(ranked_ids), qrels, k=20, n=1000)
        assert precision == 15 / 20
        assert recall == 1.0

    def test_grade_one_not_relevant_by_default(self):
        qrels = Qrels({("q1", "a"): 1, ("q1", "b"): 2})
        precision, recall = ir_metrics(self._ranked(["a", "b"]), qrels, k=2, n=10)
        assert precision == 1 / 2
        assert recall == 1.0

    def test_no_relevant_docs_gives_none_recall(self):
        qrels = Qrels({})
        precision, recall = ir_metrics(self._ranked(["a", "b"]), qrels)
        assert precision == 0.0
        assert recall is None

    def test_empty_list_rejected(self):
        with pytest.raises(EvaluationError):
            ir_metrics(RankedList([], query_id="q1"), Qrels({}))


class TestAggregation:
    def test_metric_record_nulls(self):
        query = np.array([1.0, 0.0])
        topic_set = topic_set_from_vectors([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        record = compute_metric_record(query, topic_set)
        assert record.n_topics == 2
        assert record.n_relevant_topics == 1
        assert record.overall_diversity == pytest.approx(1.0)
        assert record.relevant_diversity is None  # below 2 relevant topics

    def test_mean_and_sample_std(self):
        mean, std = mean_and_sample_std([1.0, 2.0, 3.0])
        assert mean == pytest.approx(2.0)
        assert std == pytest.approx(1.0)
        assert mean_and_sample_std([5.0])[1] is None

    def test_mean_skipping_none(self):
        assert mean_skipping_none([1.0, None, 3.0]) == (2.0, 1)
        assert mean_skipping_none([None, None]) == (None, 2)

    def test_coverage_matrix_diagonal_and_skips(self):
        rng = np.random.default_rng(11)
        query = random_unit_vectors(rng, 1, 6)[0]
        near = query + 0.1 * rng.standard_normal(6)
        sets = {
            ("q1", "a"): topic_set_from_vectors([near / np.linalg.norm(near)], strategy="a"),
            ("q1", "b"): topic_set_from_vectors(
                [random_unit_vectors(rng, 1, 6)[0] * 0.0 + np.array([0, 0, 0, 0, 0, 1.0])],
                strategy="b",
            ),
        }
        matrix = coverage_matrix(["a", "b"], sets, {"q1": query})
        assert matrix.values[0][0] == pytest.approx(1.0)
        assert matrix.values[1][1] is None  # b never has relevant topics
        assert matrix.skipped[1][1] == 1
