import numpy as np
import pytest

from crosscity.graph import RoadGraph
from crosscity import node2vec as n2v


@pytest.fixture
def path_graph():
    return RoadGraph(2, [(0, 1)])


@pytest.fixture
def two_cliques():
    # nodes 0-4 fully connected, 5-9 fully connected, one bridge 4-5
    edges = [(i, j) for i in range(5) for j in range(i + 1, 5)]
    edges += [(i, j) for i in range(5, 10) for j in range(i + 1, 10)]
    edges += [(4, 5)]
    return RoadGraph(10, edges)


class TestWalks:
    def test_sole_neighbor_always_chosen(self, path_graph):
        rng = np.random.default_rng(0)
        walk = n2v.biased_walk(path_graph, 0, 2, 1.0, 1.0, rng)
        assert walk == [0, 1]

    def test_isolated_start_gives_singleton(self):
        g = RoadGraph(3, [(1, 2)])
        walk = n2v.biased_walk(g, 0, 8, 1.0, 1.0, np.random.default_rng(0))
        assert walk == [0]

    def test_walks_respect_adjacency(self, two_cliques):
        rng = np.random.default_rng(7)
        for start in range(10):
            walk = n2v.biased_walk(two_cliques, start, 8, 0.5, 2.0, rng)
            for a, b in zip(walk, walk[1:]):
                assert two_cliques.adjacency[a, b] == 1.0

    def test_uniform_when_p_equals_q(self):
        # empirical next-node frequency from a fixed node within binomial 3 sigma
        g = RoadGraph(4, [(0, 1), (0, 2), (0, 3), (1, 2)])
        rng = np.random.default_rng(11)
        counts = {1: 0, 2: 0, 3: 0}
        steps = 10_000
        for _ in range(steps):
            walk = n2v.biased_walk(g, 1, 3, 1.0, 1.0, rng)
            # second transition leaves node walk[1]; count choices out of node 0
            if walk[1] == 0:
                counts[walk[2]] += 1
        total = sum(counts.values())
        expect = total / 3
        sigma = np.sqrt(total * (1 / 3) * (2 / 3))
        for v in counts:
            assert abs(counts[v] - expect) <= 3 * sigma

    def test_return_bias_with_small_p(self):
        g = RoadGraph(3, [(0, 1), (1, 2)])
        rng = np.random.default_rng(3)
        returns = 0
        for _ in range(2000):
            walk = n2v.biased_walk(g, 0, 3, 0.01, 1.0, rng)
            if walk == [0, 1, 0]:
                returns += 1
        assert returns > 1800  # 1/p = 100 vs 1/q = 1


class TestCorpus:
    def test_corpus_size(self, two_cliques):
        walks = n2v.build_corpus(two_cliques, walks_per_node=200, length=8)
        assert len(walks) == 10 * 200

    def test_walk_length_bound(self, two_cliques):
        walks = n2v.build_corpus(two_cliques, 5, 8)
        assert all(1 <= len(w) <= 8 for w in walks)

    def test_seed_determinism(self, two_cliques):
        a = n2v.build_corpus(two_cliques, 10, 8, seed=42)
        b = n2v.build_corpus(two_cliques, 10, 8, seed=42)
        assert a == b
        c = n2v.build_corpus(two_cliques, 10, 8, seed=43)
        assert a != c


class TestSkipgram:
    def test_output_shape(self, two_cliques):
        corpus = n2v.build_corpus(two_cliques, 10, 8, seed=0)
        feats = n2v.train_skipgram(corpus, 10, dim=64, epochs=1)
        assert feats.shape == (10, 64)
        assert np.isfinite(feats).all()

    def test_zero_epochs_returns_initialization(self, two_cliques):
        corpus = n2v.build_corpus(two_cliques, 5, 8, seed=0)
        feats = n2v.train_skipgram(corpus, 10, dim=16, epochs=0, seed=9)
        assert feats.shape == (10, 16)
        assert np.isfinite(feats).all()

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            n2v.train_skipgram([], 5, dim=8)

    def test_cliques_separate_in_embedding_space(self, two_cliques):
        # statistical check over 5 seeds: intra-clique cosine > inter-clique
        wins = 0
        for seed in range(5):
            corpus = n2v.build_corpus(two_cliques, 30, 8, seed=seed)
            feats = n2v.train_skipgram(corpus, 10, dim=16, epochs=3, seed=seed)
            unit = feats / np.linalg.norm(feats, axis=1, keepdims=True)
            sim = unit @ unit.T
            intra = np.mean([sim[i, j] for i in range(5) for j in range(5) if i != j]
                            + [sim[i, j] for i in range(5, 10) for j in range(5, 10) if i != j])
            inter = np.mean([sim[i, j] for i in range(5) for j in range(5, 10)])
            wins += intra > inter
        assert wins >= 4

    def test_loss_decreases_over_epochs(self, two_cliques):
        corpus = n2v.build_corpus(two_cliques, 20, 8, seed=1)
        _, losses = n2v.train_skipgram(corpus, 10, dim=16, epochs=4, seed=1,
                                       return_losses=True)
        assert losses[-1] < losses[0]


def test_feature_csv_round_trip(tmp_path, rng):
    feats = rng.standard_normal((6, 5))
    path = tmp_path / "f.csv"
    n2v.save_features(feats, path)
    back = n2v.load_features(path)
    assert np.array_equal(back, feats)
