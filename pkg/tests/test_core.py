import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from consensus_density.core import (
    ClusterEnsemble,
    Dataset,
    Partitioning,
    ValidationError,
    build_incidence,
    partition_from_clusters,
    partition_from_labels,
    read_ensemble,
    read_labels,
    write_ensemble,
    write_labels,
)


def test_partition_from_labels_compacts_in_first_occurrence_order():
    assert partition_from_labels([5, 5, 9, 9]).labels.tolist() == [0, 0, 1, 1]
    pi = partition_from_labels([0, 1, 2])
    assert pi.labels.tolist() == [0, 1, 2] and pi.k == 3
    assert partition_from_labels([2, 0, 2]).labels.tolist() == [0, 1, 0]
    assert partition_from_labels(["b", "a", "b"]).k == 2


def test_partitioning_rejects_bad_labels():
    with pytest.raises(ValidationError):
        Partitioning(np.array([0, 2]), 3)  # cluster 1 empty
    with pytest.raises(ValidationError):
        Partitioning(np.array([0, 3]), 2)
    with pytest.raises(ValidationError):
        partition_from_labels([])


def test_partitioning_is_immutable():
    pi = partition_from_labels([0, 1, 1])
    with pytest.raises(ValueError):
        pi.labels[0] = 1


def test_clusters_view():
    pi = partition_from_clusters([[0, 3], [1, 2]])
    assert [c.tolist() for c in pi.clusters()] == [[0, 3], [1, 2]]
    assert pi.sizes.tolist() == [2, 2]
    with pytest.raises(ValidationError):
        partition_from_clusters([[0, 1], [1, 2]])
    with pytest.raises(ValidationError):
        partition_from_clusters([[0], [2]], n=3)


def test_incidence_examples(E0, E1):
    assert build_incidence(E0).to_dense().tolist() == [
        [1, 0, 1, 0], [1, 0, 1, 0], [0, 1, 0, 1], [0, 1, 0, 1]]
    assert build_incidence(E1).to_dense().tolist() == [
        [1, 0, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0]]
    single = ClusterEnsemble.from_labels([[0, 1]])
    assert build_incidence(single).to_dense().tolist() == [[1, 0], [0, 1]]


def test_ensemble_rejects_mixed_n():
    with pytest.raises(ValidationError):
        ClusterEnsemble.from_labels([[0, 1], [0, 1, 1]])
    with pytest.raises(ValidationError):
        ClusterEnsemble(())


@st.composite
def ensembles(draw):
    n = draw(st.integers(1, 30))
    p = draw(st.integers(1, 6))
    rows = [draw(st.lists(st.integers(0, 5), min_size=n, max_size=n)) for _ in range(p)]
    return ClusterEnsemble.from_labels(rows)


@settings(max_examples=100, deadline=None)
@given(ensembles())
def test_incidence_invariants(ens):
    H = build_incidence(ens)
    dense = H.to_dense()
    assert H.shape == (ens.n, ens.d)
    assert np.all(dense.sum(axis=1) == ens.p)
    assert set(np.unique(dense)) <= {0.0, 1.0}
    assert H.column_sums.sum() == ens.n * ens.p
    sizes = np.concatenate([pi.sizes for pi in ens])
    assert H.column_sums.tolist() == sizes.tolist()
    for a, pi in enumerate(ens):
        assert partition_from_labels(H.block(a)) == pi
    for f in range(H.d):
        assert H.members(f).tolist() == np.flatnonzero(dense[:, f]).tolist()
    assert np.array_equal(H.to_sparse().toarray(), dense)


def test_dataset_validation():
    with pytest.raises(ValidationError):
        Dataset(np.array([[1.0]]), "tiny")
    with pytest.raises(ValidationError):
        Dataset(np.array([[1.0], [np.nan]]), "holes")
    d = Dataset(np.array([[1.0], [2.0]]), "ok")
    assert d.n == 2 and d.f == 1 and d.k0 == 2


def test_label_and_ensemble_round_trip(tmp_path, E1):
    write_labels(tmp_path / "l.txt", E1[0])
    assert read_labels(tmp_path / "l.txt") == E1[0]
    write_ensemble(tmp_path / "ens", E1)
    back = read_ensemble(tmp_path / "ens")
    assert back.p == 2 and all(a == b for a, b in zip(back, E1))


def test_read_labels_reports_junk(tmp_path):
    (tmp_path / "bad.txt").write_text("0\nx\n")
    with pytest.raises(ValidationError):
        read_labels(tmp_path / "bad.txt")
