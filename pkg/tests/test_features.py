import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import line_instance
from mlaco.errors import DegenerateSamplesError
from mlaco.features import (EdgeFeatureMatrix, assemble, extract, graph_features, statistical_features,
                            statistical_measures)
from mlaco.instance import Instance, generate_random, make_route
from mlaco.sampler import sample
from oracles import naive_ranks, naive_statistical


def test_f1_is_cost_over_budget():
    inst = line_instance([0, 2, 5], [0, 4, 0], t_max=10)
    g = graph_features(inst)
    assert g[0, 1, 0] == pytest.approx(0.2)
    assert g[1, 2, 0] == pytest.approx(0.3)


def test_f2_normalises_by_row_max():
    inst = line_instance([0, 2, 4, 5], [0, 4, 6, 0], t_max=20)
    g = graph_features(inst)
    # from 0: s/c = 4/2, 6/4, 0/5 -> max 2
    assert g[0, 1, 1] == pytest.approx(1.0)
    assert g[0, 2, 1] == pytest.approx(1.5 / 2.0)
    assert g[0, 3, 1] == 0.0


@given(st.integers(3, 20), st.integers(0, 1000))
def test_f3_matches_ratio_definition(n, seed):
    inst = generate_random(n, seed=seed)
    g = graph_features(inst)
    s, c = inst.score, inst.cost
    for j in range(n):
        if s[j] == 0:
            continue
        ratios = [s[j] / c[k, j] for k in range(n) if k != j]
        for i in range(n):
            if i != j:
                assert g[i, j, 2] == pytest.approx((s[j] / c[i, j]) / max(ratios))


@given(st.integers(3, 20), st.integers(0, 1000))
def test_graph_feature_ranges(n, seed):
    g = graph_features(generate_random(n, seed=seed))
    off = ~np.eye(n, dtype=bool)
    assert np.all(g[off][:, 1:] >= 0) and np.all(g[off][:, 1:] <= 1 + 1e-12)
    assert np.all(g[~off] == 0)


@given(st.integers(3, 10), st.integers(0, 1000), st.integers(5, 100))
def test_set_representation_matches_binary_strings(n, seed, m):
    inst = generate_random(n, seed=seed)
    s = sample(inst, m, seed)
    if np.ptp(s.objectives) == 0:
        with pytest.raises(DegenerateSamplesError):
            statistical_measures(s, n)
        return
    f_r, f_c = statistical_measures(s, n)
    ref_r, ref_c = naive_statistical(s.paths, s.lengths, s.objectives, naive_ranks(s.objectives), n)
    assert np.allclose(f_r, ref_r, atol=1e-9)
    assert np.allclose(f_c, ref_c, atol=1e-9)


def test_f4_f5_normalised_to_unit_max():
    inst = generate_random(15, seed=3)
    f = statistical_features(inst, sample(inst, 1500, 0))
    assert f[..., 0].max() == pytest.approx(1.0)
    assert f[..., 1].max() == pytest.approx(1.0)


def test_all_zero_scores_are_degenerate():
    inst = Instance("z", np.ones((4, 4)), np.zeros(4), 10, 0, 3)
    with pytest.raises(DegenerateSamplesError):
        extract(inst, m=50)


def test_assemble_labels_mark_route_edges():
    inst = generate_random(10, seed=1)
    route = make_route(inst, [0, 3, 5, 9])
    fm = assemble(inst, sample(inst, 300, 0), optimal=route)
    assert len(fm) == 90 and fm.positives == 3
    pos = {(int(a), int(b)) for a, b, lab in zip(fm.i, fm.j, fm.labels) if lab == 1}
    assert pos == {(0, 3), (3, 5), (5, 9)}
    assert set(np.unique(fm.labels)) == {-1, 1}


def test_dense_view_and_csv_round_trip(tmp_path):
    inst = generate_random(9, seed=2)
    fm = extract(inst, m=200, seed=1, optimal=make_route(inst, [0, 4, 8]))
    d = fm.dense(0)
    assert np.isnan(d[0, 0]) and d[0, 1] == fm.X[0, 0]
    back = EdgeFeatureMatrix.from_csv(fm.to_csv(tmp_path / "f.csv"))
    assert back.n == 9
    assert np.array_equal(back.i, fm.i) and np.array_equal(back.labels, fm.labels)
    assert np.array_equal(back.X, fm.X)


def test_concat_drops_single_instance_shape():
    a = extract(generate_random(6, seed=0), m=100)
    b = extract(generate_random(7, seed=1), m=100)
    c = EdgeFeatureMatrix.concat([a, b])
    assert len(c) == 30 + 42 and c.n == 0 and c.labels is None
    with pytest.raises(ValueError):
        c.dense(0)


def test_extract_default_sample_size_is_deterministic():
    inst = generate_random(12, seed=5)
    assert np.array_equal(extract(inst, seed=3).X, extract(inst, seed=3).X)
