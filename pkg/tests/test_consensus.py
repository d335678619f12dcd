import numpy as np
import pytest

from consensus_density.core import ClusterEnsemble, ValidationError, build_incidence
from consensus_density.consensus import (
    ConsensusRequest,
    LinkageState,
    cspa,
    hierarchical,
    mcla,
    run_consensus,
    sec_transform,
)
from consensus_density.density import OracleCapError, coassociation, density_score

from conftest import random_ensemble

ALL_REQUESTS = [
    ("eac_km", {}), ("h_km", {}), ("sec", {}), ("ecc", {}), ("mcla", {}), ("cspa", {}),
    ("hier", {"linkage": "SL"}), ("hier", {"linkage": "AL"}), ("hier", {"linkage": "ML"}),
    ("hier", {"linkage": "AL", "matrix": "enhanced"}),
]


@pytest.mark.parametrize("algo,options", ALL_REQUESTS)
def test_every_algorithm_recovers_E0(E0, algo, options):
    fit = run_consensus(ConsensusRequest(E0, 2, algo, options=options))
    assert fit.labels.tolist() == [0, 0, 1, 1]


def test_request_validation(E0):
    with pytest.raises(ValidationError):
        ConsensusRequest(E0, 1, "cspa")
    with pytest.raises(ValidationError):
        ConsensusRequest(E0, 2, "bogus")
    with pytest.raises(ValidationError):
        ConsensusRequest(E0, 5, "eac_km")
    with pytest.raises(ValidationError):
        ConsensusRequest(E0, 2, "hier", options={"linkage": "XL"})
    with pytest.raises(ValidationError):
        ConsensusRequest(E0, 2, "hier", options={"matrix": "cooked"})


@pytest.mark.parametrize("algo,options", ALL_REQUESTS)
def test_valid_and_deterministic_on_random_ensembles(algo, options):
    ens = random_ensemble(np.random.default_rng(7), 90, 8, kmax=9)
    req = ConsensusRequest(ens, 6, algo, seed=11, options=options)
    a, b = run_consensus(req), run_consensus(req)
    assert a.partitioning.n == 90
    assert a.partitioning == b.partitioning and a.loss == b.loss
    if algo != "mcla":
        assert a.partitioning.k == 6
    assert 1 <= a.partitioning.k <= 6


def test_sec_weights(E0, E1):
    _, w1 = sec_transform(build_incidence(E1))
    assert w1.tolist() == [4.0, 3.0, 3.0]
    scaled, w0 = sec_transform(build_incidence(E0))
    assert w0.tolist() == [4.0] * 4
    assert np.allclose(scaled.toarray() * w0[:, None], build_incidence(E0).to_dense())
    singles = ClusterEnsemble.from_labels([[0, 1, 2]])
    assert sec_transform(build_incidence(singles))[1].tolist() == [1.0, 1.0, 1.0]


def test_sec_weights_floor():
    ens = random_ensemble(np.random.default_rng(1), 70, 6)
    _, w = sec_transform(build_incidence(ens))
    assert np.all(w >= 6)
    A = coassociation(build_incidence(ens)).values
    assert np.allclose(w, A.sum(axis=1) * 6)


def test_mcla_on_E0_and_fewer_clusters_allowed(E0):
    fit = mcla(E0, 2)
    assert fit.labels.tolist() == [0, 0, 1, 1]
    with pytest.raises(ValidationError):
        mcla(E0, 5)


def test_mcla_may_return_fewer_clusters():
    # identical partitionings: meta-clusters over duplicated columns
    ens = ClusterEnsemble.from_labels([[0, 0, 0, 1, 1, 1]] * 3)
    fit = mcla(ens, 3, seed=0)
    assert fit.partitioning.k <= 3
    assert fit.labels[0] == fit.labels[1] == fit.labels[2]


def test_cspa_examples(E0):
    assert cspa(E0, 2).labels.tolist() == [0, 0, 1, 1]
    uniform = ClusterEnsemble.from_labels([[0] * 7])
    sizes = sorted(cspa(uniform, 2).partitioning.sizes.tolist())
    assert sizes == [3, 4]
    with pytest.raises(OracleCapError):
        cspa(random_ensemble(np.random.default_rng(0), 30, 3), 2, cap=20)


def test_hierarchical_examples(E0):
    A = coassociation(build_incidence(E0)).values.copy()
    assert hierarchical(A, "AL", 2).labels.tolist() == [0, 0, 1, 1]
    assert hierarchical(np.eye(5), "AL", 5).labels.tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(OracleCapError):
        hierarchical(np.eye(6), "AL", 2, cap=5)


def test_single_linkage_follows_spurious_link(E0):
    A = coassociation(build_incidence(E0)).values.copy()
    A[1, 2] = A[2, 1] = 0.5
    for linkage, link in (("SL", 0.5), ("AL", 0.125), ("ML", 0.0)):
        st = LinkageState.start(A)
        while st.count > 2:
            st.merge(*st.next_pair()[:2], linkage)
        # the similarity that would drive the next merge across the pairs
        assert st.next_pair()[2] == pytest.approx(link)
    # SL joins everything through the spurious link once asked for one cluster
    assert hierarchical(A, "SL", 1).partitioning.k == 1


def test_average_linkage_matches_direct_recomputation():
    rng = np.random.default_rng(4)
    A = coassociation(build_incidence(random_ensemble(rng, 40, 6))).values
    st = LinkageState.start(A)
    members = {i: [i] for i in range(40)}
    while st.count > 3:
        r, c, sim = st.next_pair()
        direct = A[np.ix_(members[r], members[c])].mean()
        assert sim == pytest.approx(direct, abs=1e-9)
        st.merge(r, c, "AL")
        members[r] += members.pop(c)
        for other in members:
            if other != r:
                assert st.S[r, other] == pytest.approx(A[np.ix_(members[r], members[other])].mean(), abs=1e-9)


def test_hierarchical_ties_pick_smallest_pair():
    A = np.ones((4, 4))
    st = LinkageState.start(A)
    assert st.next_pair()[:2] == (0, 1)
    st.merge(0, 1, "AL")
    assert st.next_pair()[:2] == (0, 2)


def test_hierarchical_matches_scipy_linkage():
    from scipy.cluster.hierarchy import fcluster, linkage
    from scipy.spatial.distance import squareform
    from consensus_density.metrics import nmi
    rng = np.random.default_rng(1)
    for t in range(8):
        X = rng.random((50, 3))
        D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
        for ours, theirs in (("SL", "single"), ("AL", "average"), ("ML", "complete")):
            got = hierarchical(-D, ours, 4).labels
            ref = fcluster(linkage(squareform(D, checks=False), theirs), 4, "maxclust")
            assert nmi(got, ref) == pytest.approx(1.0)


def test_hierarchical_refuses_above_cap():
    ens = random_ensemble(np.random.default_rng(0), 30, 3)
    with pytest.raises(OracleCapError):
        run_consensus(ConsensusRequest(ens, 2, "hier", options={"oracle_cap": 10}))


def test_kmeans_density_wins_most_trials():
    rng = np.random.default_rng(33)
    wins = 0
    trials = 6
    others = [("sec", {}), ("ecc", {}), ("mcla", {}), ("cspa", {}), ("hier", {"linkage": "AL"})]
    for t in range(trials):
        base = rng.integers(0, 6, 120)
        ens = ClusterEnsemble.from_labels([np.where(rng.random(120) < 0.8, base, rng.integers(0, 6, 120))
                                           for _ in range(10)])
        H = build_incidence(ens)
        km = density_score(H, run_consensus(ConsensusRequest(ens, 6, "eac_km", seed=t)).partitioning)
        best_other = max(density_score(H, run_consensus(ConsensusRequest(ens, 6, a, seed=t, options=o)).partitioning)
                         for a, o in others)
        wins += km >= best_other - 1e-12
    assert wins > trials // 2
