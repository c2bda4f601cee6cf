import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdsim import attacks, simplex
from bdsim.errors import EmptyInput, ParseError, ShapeMismatch, TooFewSamples

from oracles import best_vertex, hull_samples, lmax_objective, population_covariance

FIG2_CLIENTS = [(0.82, 0.14, 0.04), (0.73, 0.06, 0.21), (0.92, 0.04, 0.04), (0.61, 0.08, 0.21)]


def test_attack_spec_invariants():
    attacks.AttackSpec("LMA", loss="CEL")
    attacks.AttackSpec("CPA", similarity="model")
    attacks.AttackSpec("FEDAVG_GAUSS", noise_scale=1.0)
    with pytest.raises(ValueError):
        attacks.AttackSpec("LMA")
    with pytest.raises(ValueError):
        attacks.AttackSpec("RLF", loss="CEL")
    with pytest.raises(ValueError):
        attacks.AttackSpec("HIPS_CPA")
    with pytest.raises(ValueError):
        attacks.AttackSpec("FEDAVG_GAUSS", noise_scale=0.0)


def test_honest_mean_figure_columns():
    # the figure prints 0.15 for the last entry; the four columns average to 0.125
    np.testing.assert_allclose(attacks.honest_mean(FIG2_CLIENTS), [0.77, 0.08, 0.125], atol=1e-12)


def test_honest_mean_trivial():
    p = [0.1, 0.2, 0.7]
    np.testing.assert_array_equal(attacks.honest_mean([p]), p)
    np.testing.assert_allclose(attacks.honest_mean([p, p, p]), p)
    with pytest.raises(EmptyInput):
        attacks.honest_mean(np.zeros((0, 3)))


def test_rlf_vertex_and_deterministic():
    v = attacks.rlf(5, 42, 17)
    assert sorted(v.tolist()) == [0, 0, 0, 0, 1]
    assert np.array_equal(v, attacks.rlf(5, 42, 17))


def test_rlf_uniform_frequencies():
    c, n = 5, 10_000
    labels = attacks.rlf_labels(c, 7, np.arange(n))
    counts = np.bincount(labels, minlength=c)
    p = 1 / c
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_lma_figure_mean_picks_argmin():
    out = attacks.lma([0.77, 0.08, 0.15], "CEL")
    assert out.tolist() == [0, 1, 0]
    for kind in ("CEL", "MSE"):
        # frozen from oracles.best_vertex: index 1 maximizes the server loss for both losses
        assert best_vertex([0.77, 0.08, 0.15], 0.45, kind)[0] == 1
        assert attacks.lma([0.77, 0.08, 0.15], kind).tolist() == [0, 1, 0]


def test_lma_tie_breaks_low():
    assert attacks.lma([0.25] * 4).tolist() == [1, 0, 0, 0]
    assert attacks.lma([0.98, 0.01, 0.01]).tolist() == [0, 1, 0]


def test_build_similarity_examples():
    assert np.all(attacks.build_similarity(np.tile([0.2, 0.3, 0.5], (6, 1))) == 0)
    C = attacks.build_similarity([[1, 0, 0], [0, 1, 0]])
    np.testing.assert_allclose(C, population_covariance([[1, 0, 0], [0, 1, 0]]), atol=1e-15)
    np.testing.assert_allclose(C, [[0.25, -0.25, 0], [-0.25, 0.25, 0], [0, 0, 0]], atol=1e-15)
    rng = np.random.default_rng(0)
    C = attacks.build_similarity(rng.dirichlet(np.ones(4), size=50))
    assert np.array_equal(C, C.T)
    with pytest.raises(TooFewSamples):
        attacks.build_similarity([[0.5, 0.5]])


def test_build_similarity_matches_oracle_on_random_rows():
    rows = np.random.default_rng(3).dirichlet(np.ones(4), size=30)
    np.testing.assert_allclose(attacks.build_similarity(rows), population_covariance(rows.tolist()), atol=1e-15)


FIG2_C = [[1, 0.2, 0.3], [0.2, 1, 0.8], [0.3, 0.8, 1]]


def test_cpa_examples():
    assert attacks.cpa([0.77, 0.08, 0.15], FIG2_C).tolist() == [0, 1, 0]
    assert attacks.cpa([0.2, 0.5, 0.3], np.ones((3, 3))).tolist() == [1, 0, 0]
    inc = np.array([[1, 2, 3], [2, 4, 5], [3, 5, 6]])
    assert attacks.cpa([0.9, 0.05, 0.05], inc).tolist() == [1, 0, 0]


def test_hips_hull():
    P = np.random.default_rng(1).dirichlet(np.ones(3), size=3)
    assert len(attacks.hips_hull(P)) == 3
    assert len(attacks.hips_hull([P[0], P[1], P[0] + 1e-14 * np.array([1, -1, 0])])) == 2
    hull = attacks.hips_hull([P[0]])
    assert len(hull) == 1 and np.array_equal(hull[0], P[0])


@pytest.mark.parametrize("loss", ["CEL", "MSE"])
def test_hips_lma_no_interior_point_beats_best_vertex(loss):
    rng = np.random.default_rng(11)
    P = np.array([[0.9, 0.05, 0.05], [1 / 3, 1 / 3, 1 / 3]])
    mean = P.mean(axis=0)
    out = attacks.hips_lma(P, mean, 0.3, loss)
    best = lmax_objective(out, mean, 0.3, loss)
    samples = hull_samples(P, 10_000, rng)
    sampled = max(lmax_objective(s, mean, 0.3, loss) for s in samples)
    assert sampled <= best + 1e-9
    assert any(np.array_equal(out, p) for p in P)


def test_hips_lma_single_client_and_validity():
    p = np.array([[0.2, 0.5, 0.3]])
    assert np.array_equal(attacks.hips_lma(p, p[0], 0.2, "CEL"), p[0])
    rng = np.random.default_rng(5)
    P = rng.dirichlet(np.ones(4), size=6)
    simplex.validate(attacks.hips_lma(P, P.mean(0), 0.45, "MSE"))


def test_hips_cpa_examples():
    C = np.array([[1.0, 0.9, 0.1], [0.9, 1.0, 0.2], [0.1, 0.2, 1.0]])
    P = np.array([[0.7, 0.2, 0.1], [0.5, 0.1, 0.4], [0.6, 0.35, 0.05]])
    out = attacks.hips_cpa(P, P.mean(0), C)
    # brute force over vertices, then dense hull sampling
    vals = P @ C[0]
    assert np.array_equal(out, P[np.argmin(vals)])
    samples = hull_samples(P, 10_000, np.random.default_rng(0))
    assert np.min(samples @ C[0]) >= vals.min() - 1e-12
    flat = np.full((3, 3), 0.5)
    assert np.array_equal(attacks.hips_cpa(P, P.mean(0), flat), P[0])
    assert np.array_equal(attacks.hips_cpa(P[:1], P[0], C), P[0])


def test_hips_batched_matches_per_sample():
    rng = np.random.default_rng(2)
    H = rng.dirichlet(np.ones(5), size=(7, 12))
    mean = H.mean(axis=0)
    C = attacks.build_similarity(rng.dirichlet(np.ones(5), size=40))
    batch_lma = attacks.hips_lma(H, mean, 0.4, "CEL")
    batch_cpa = attacks.hips_cpa(H, mean, C)
    for s in range(12):
        np.testing.assert_array_equal(batch_lma[s], attacks.hips_lma(H[:, s], mean[s], 0.4, "CEL"))
        np.testing.assert_array_equal(batch_cpa[s], attacks.hips_cpa(H[:, s], mean[s], C))


def test_fedavg_gauss():
    v = attacks.fedavg_gauss(100_000, 2.0, 3)
    assert abs(v.mean()) <= 4 * 2.0 / np.sqrt(v.size)
    assert np.array_equal(v, attacks.fedavg_gauss(100_000, 2.0, 3))
    with pytest.raises(ValueError):
        attacks.fedavg_gauss(10, 0.0, 1)


def test_fedavg_takeover():
    rng = np.random.default_rng(0)
    others = rng.normal(size=(4, 6))
    w = attacks.fedavg_takeover(np.zeros(6), others, 5)
    assert np.max(np.abs(np.vstack([others, w]).mean(axis=0))) <= 1e-12
    t = rng.normal(size=6)
    np.testing.assert_array_equal(attacks.fedavg_takeover(t, np.zeros((0, 6)), 1), t)
    w = attacks.fedavg_takeover(t, others, 5)
    np.testing.assert_allclose(np.vstack([others, w]).mean(axis=0), t, atol=1e-10)
    with pytest.raises(ShapeMismatch):
        attacks.fedavg_takeover(t, others, 3)


def test_fd_attack_dispatch_shapes_and_validity():
    rng = np.random.default_rng(9)
    H = rng.dirichlet(np.ones(5), size=(11, 30))
    C = attacks.build_similarity(rng.dirichlet(np.ones(5), size=40))
    for spec in [
        attacks.AttackSpec("RLF", seed=1),
        attacks.AttackSpec("LMA", loss="CEL"),
        attacks.AttackSpec("CPA", similarity="model"),
        attacks.AttackSpec("HIPS_LMA", loss="MSE"),
        attacks.AttackSpec("HIPS_CPA", similarity="model"),
    ]:
        out = attacks.fd_attack(spec, H, 0.45, C, round_index=2)
        assert out.shape == (30, 5)
        assert simplex.count_invalid_rows(out) == 0
        again = attacks.fd_attack(spec, H, 0.45, C, round_index=2)
        assert np.array_equal(out, again)


def test_similarity_file_roundtrip(tmp_path):
    C = attacks.build_similarity(np.random.default_rng(0).dirichlet(np.ones(3), size=20))
    path = tmp_path / "sim.txt"
    attacks.write_similarity(path, C)
    np.testing.assert_array_equal(attacks.read_similarity(path), C)
    path.write_text("2\n1 0.5\n0.5\n")
    with pytest.raises(ParseError, match="line 3"):
        attacks.read_similarity(path)
    path.write_text("2\n1 0.5\n0.4 1\n")
    with pytest.raises(ParseError):
        attacks.read_similarity(path)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([3, 5, 10]), st.sampled_from([0.1, 0.3, 0.45]))
def test_lma_optimal_over_vertices(seed, c, alpha):
    rng = np.random.default_rng(seed)
    yh = rng.dirichlet(np.ones(c))
    for loss in ("CEL", "MSE"):
        out = attacks.lma(yh, loss)
        _, best = best_vertex(yh.tolist(), alpha, loss)
        assert lmax_objective(out.tolist(), yh.tolist(), alpha, loss) >= best - 1e-12
