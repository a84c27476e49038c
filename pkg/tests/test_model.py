import numpy as np
import pytest

from sparsemix.errors import ZeroRangeColumn
from sparsemix.kmeans import kmeans
from sparsemix.model import (
    Dataset,
    MixtureState,
    PriorSpec,
    derive_hyper,
    init_state,
    prior_b0_variance,
)
from sparsemix.randkit import RngStream


def _toy_state(lam):
    r = lam.size
    return MixtureState(
        weights=np.array([1.0]),
        means=np.zeros((1, r)),
        cov_chol=np.eye(r)[None, :, :].copy(),
        alloc=np.zeros(1, dtype=np.int64),
        counts=np.array([1], dtype=np.int64),
        b0=np.zeros(r),
        lam=lam,
        C0=None,
        e0=1.0,
    )


def test_derive_hyper_constants_r4():
    rng = np.random.default_rng(0)
    ds = Dataset(Y=rng.standard_normal((20, 4)))
    hyper = derive_hyper(ds)
    assert hyper.c0 == pytest.approx(4.0)
    assert hyper.g0 == pytest.approx(2.0)


def test_derive_hyper_hand_case_r1():
    ds = Dataset(Y=np.array([[0.0], [1.0], [2.0], [3.0]]))
    hyper = derive_hyper(ds)
    assert hyper.median[0] == pytest.approx(1.5)
    assert hyper.ranges[0] == pytest.approx(3.0)
    assert hyper.c0 == pytest.approx(2.5)
    assert hyper.g0 == pytest.approx(0.5)
    assert hyper.G0.matrix()[0, 0] == pytest.approx((100.0 * 0.5 / 2.5) / 9.0)
    assert hyper.R0.matrix()[0, 0] == pytest.approx(9.0)


def test_derive_hyper_zero_range():
    ds = Dataset(Y=np.column_stack([np.arange(5.0), np.full(5, 2.0)]))
    with pytest.raises(ZeroRangeColumn):
        derive_hyper(ds)


def test_derive_hyper_row_permutation_invariant():
    rng = np.random.default_rng(1)
    Y = rng.standard_normal((31, 3))
    h1 = derive_hyper(Dataset(Y=Y))
    h2 = derive_hyper(Dataset(Y=Y[rng.permutation(31)]))
    assert np.allclose(h1.median, h2.median)
    assert np.allclose(h1.ranges, h2.ranges)


def test_prior_b0_variance_branches():
    rng = np.random.default_rng(2)
    ds = Dataset(Y=rng.standard_normal((10, 2)) * np.array([1.0, 1.5]))
    hyper = derive_hyper(ds)

    std_spec = PriorSpec(n_components=2, mean_prior="standard")
    ng_spec = PriorSpec(n_components=2, mean_prior="normal_gamma")

    state = _toy_state(np.array([0.3, 2.0]))
    assert np.allclose(prior_b0_variance(hyper, state, std_spec).matrix(), hyper.R0.matrix())

    state_unit = _toy_state(np.ones(2))
    assert np.allclose(prior_b0_variance(hyper, state_unit, ng_spec).matrix(), hyper.R0.matrix())

    ds2 = Dataset(Y=np.array([[0.0, 0.0], [2.0, 3.0]]))
    hyper2 = derive_hyper(ds2)  # ranges (2, 3)
    state2 = _toy_state(np.array([0.25, 1.0]))
    expected = np.diag([4.0 * 0.25, 9.0 * 1.0])
    assert np.allclose(prior_b0_variance(hyper2, state2, ng_spec).matrix(), expected)


def test_init_state_single_component():
    rng = np.random.default_rng(3)
    Y = rng.standard_normal((200, 2)) + np.array([5.0, -1.0])
    ds = Dataset(Y=Y)
    spec = PriorSpec(n_components=1, e0_policy="fixed", e0_value=1.0)
    state = init_state(ds, derive_hyper(ds), spec, RngStream(0))
    assert np.all(state.alloc == 0)
    assert np.abs(state.means[0] - Y.mean(axis=0)).max() < 0.5


def test_init_state_splits_separated_blobs():
    rng = np.random.default_rng(4)
    Y = np.concatenate([rng.standard_normal(60) - 10.0, rng.standard_normal(60) + 10.0])[:, None]
    ds = Dataset(Y=Y)
    spec = PriorSpec(n_components=2, e0_policy="fixed", e0_value=1.0)
    state = init_state(ds, derive_hyper(ds), spec, RngStream(1))
    # brute-force 2-means on sorted 1-d data: the optimal split point
    order = np.argsort(Y[:, 0])
    best_cut, best_obj = None, np.inf
    for cut in range(1, 120):
        left, right = Y[order[:cut], 0], Y[order[cut:], 0]
        obj = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
        if obj < best_obj:
            best_cut, best_obj = cut, obj
    assert best_cut == 60
    split = state.alloc[order]
    assert len(set(split[:60].tolist())) == 1 and len(set(split[60:].tolist())) == 1
    assert split[0] != split[-1]


def test_init_state_deterministic():
    rng = np.random.default_rng(5)
    ds = Dataset(Y=rng.standard_normal((80, 3)))
    spec = PriorSpec(n_components=5)
    s1 = init_state(ds, derive_hyper(ds), spec, RngStream(7))
    s2 = init_state(ds, derive_hyper(ds), spec, RngStream(7))
    assert np.array_equal(s1.alloc, s2.alloc)
    assert np.array_equal(s1.means, s2.means)
    assert np.array_equal(s1.cov_chol, s2.cov_chol)
    assert s1.e0 == s2.e0


def test_init_state_valid_on_random_datasets():
    for i in range(100):
        rng = np.random.default_rng(100 + i)
        n = int(rng.integers(8, 40))
        r = int(rng.integers(1, 4))
        K = int(rng.integers(1, min(n, 6)))
        Y = rng.standard_normal((n, r)) * (1 + rng.random(r))
        ds = Dataset(Y=Y)
        spec = PriorSpec(
            n_components=K,
            mean_prior="normal_gamma" if i % 2 else "standard",
            e0_policy="gamma" if i % 3 else "fixed",
            e0_value=0.05,
        )
        state = init_state(ds, derive_hyper(ds), spec, RngStream(i))
        state.validate()


def test_standard_prior_keeps_lambda_fixed():
    rng = np.random.default_rng(6)
    ds = Dataset(Y=rng.standard_normal((60, 2)))
    spec = PriorSpec(n_components=3, mean_prior="standard")
    state = init_state(ds, derive_hyper(ds), spec, RngStream(2))
    assert np.array_equal(state.lam, np.ones(2))
    from sparsemix import sampler

    hyper = derive_hyper(ds)
    rng2 = RngStream(3)
    for _ in range(5):
        sampler.step_lambda(state, hyper, spec, rng2)
        sampler.step_b0(state, hyper, spec, rng2)
    assert np.array_equal(state.lam, np.ones(2))
    assert np.array_equal(state.b0, hyper.median)


def test_init_state_requires_k_le_n():
    ds = Dataset(Y=np.arange(3.0)[:, None])
    spec = PriorSpec(n_components=5)
    with pytest.raises(ValueError):
        init_state(ds, derive_hyper(ds), spec, RngStream(0))


def test_kmeans_recovers_separated_clusters():
    rng = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    Y = np.concatenate([c + 0.3 * rng.standard_normal((40, 2)) for c in centers])
    labels, _, _ = kmeans(Y, 3, RngStream(4))
    blocks = [labels[i * 40 : (i + 1) * 40] for i in range(3)]
    assert all(len(set(b.tolist())) == 1 for b in blocks)
    assert len({b[0] for b in blocks}) == 3
