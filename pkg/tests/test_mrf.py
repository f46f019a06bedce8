"""Label prior: clique statistics, conditionals, prior sweeps, kernels."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from csunmix import CapabilityError, GridGeometry, Library, NoiseModel, NumericError, SupportField
from csunmix import mrf
from csunmix.kernels import agreement_counts, label_sweep
from csunmix.rng import make_rng


# ------------------------------------------------------ admissible configs

def test_admissible_configs_explicit():
    assert mrf.admissible_configs(1).tolist() == [[1]]
    assert mrf.admissible_configs(2).tolist() == [[1, 0], [0, 1], [1, 1]]
    cfgs3 = mrf.admissible_configs(3)
    assert cfgs3.shape == (7, 3)
    # row i holds the bits of i + 1, least significant first
    for i, row in enumerate(cfgs3):
        assert int(np.dot(row, [1, 2, 4])) == i + 1


def test_admissible_configs_cached_and_readonly():
    a = mrf.admissible_configs(4)
    assert mrf.admissible_configs(4) is a
    assert not a.flags.writeable


def test_admissible_configs_limits():
    with pytest.raises(ValueError):
        mrf.admissible_configs(0)
    with pytest.raises(CapabilityError):
        mrf.admissible_configs(17)


# ------------------------------------------------------------- psi and phi

def test_psi():
    assert mrf.psi(np.array([[1, 0], [0, 1]])) == 1
    assert mrf.psi(np.array([[1, 0], [1, 0]])) == 0
    assert mrf.psi(np.zeros((2, 0), dtype=np.uint8)) == 1  # vacuous


def test_phi_matches_brute_force_small():
    rng = np.random.default_rng(0)
    for n_row, n_col, n_r in [(1, 2, 2), (2, 2, 3), (3, 4, 2), (4, 3, 1), (1, 7, 2)]:
        geom = GridGeometry(n_row, n_col)
        z = (rng.random((n_r, geom.n_pixels)) < 0.5).astype(np.uint8)
        assert np.array_equal(mrf.phi_all(z, geom), oracles.brute_phi(z, n_row, n_col))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 4), st.integers(0, 2**31))
def test_phi_matches_brute_force_property(n_row, n_col, n_r, seed):
    geom = GridGeometry(n_row, n_col)
    z = (np.random.default_rng(seed).random((n_r, geom.n_pixels)) < 0.5).astype(np.uint8)
    assert np.array_equal(mrf.phi_all(z, geom), oracles.brute_phi(z, n_row, n_col))


def test_phi_constant_field_saturates():
    geom = GridGeometry(5, 4)
    z = np.ones((3, geom.n_pixels), dtype=np.uint8)
    assert np.all(mrf.phi_all(z, geom) == geom.total_neighbor_pairs)


def test_phi_row_accessor_and_bounds():
    geom = GridGeometry(2, 2)
    z = np.array([[1, 1, 1, 1], [1, 0, 0, 1]], dtype=np.uint8)
    assert mrf.phi(z, 0, geom) == geom.total_neighbor_pairs
    assert mrf.phi(z, 1, geom) == oracles.brute_phi(z, 2, 2)[1]
    with pytest.raises(ValueError):
        mrf.phi(z, 2, geom)


def test_phi_relabel_symmetry():
    geom = GridGeometry(3, 3)
    rng = np.random.default_rng(5)
    z = (rng.random((4, 9)) < 0.5).astype(np.uint8)
    perm = np.array([2, 0, 3, 1])
    assert np.array_equal(mrf.phi_all(z[perm], geom), mrf.phi_all(z, geom)[perm])


def test_phi_accepts_support_fields_and_checks_size():
    geom = GridGeometry(2, 2)
    field = SupportField(np.ones((2, 4), dtype=np.uint8))
    assert np.all(mrf.phi_all(field, geom) == geom.total_neighbor_pairs)
    with pytest.raises(ValueError):
        mrf.phi_all(np.ones((2, 5), dtype=np.uint8), geom)


def test_agreement_counts_kernel_matches_brute():
    geom = GridGeometry(4, 6)
    nbrs, counts = geom.neighbor_table
    rng = np.random.default_rng(9)
    z = (rng.random((3, geom.n_pixels)) < 0.4).astype(np.uint8)
    assert np.array_equal(
        agreement_counts(z, nbrs, counts), oracles.brute_phi(z, 4, 6)
    )


# -------------------------------------------------- single-pixel conditional

def _direct_logweights(n, z, x_n, y_n, m, variances, beta, geom):
    """The conditional from its definition, with plain loops."""
    cfgs = mrf.admissible_configs(m.shape[1])
    row, col = geom.pixel_coords(n)
    nbrs = oracles.brute_neighbors(geom.n_row, geom.n_col, row, col)
    out = []
    for cfg in cfgs:
        mrf_term = 0.0
        for r in range(m.shape[1]):
            agree = sum(1 for j in nbrs if z[r, j] == cfg[r])
            mrf_term += 2.0 * beta[r] * agree
        recon = m @ (x_n * cfg)
        quad = np.sum((y_n - recon) ** 2 / variances)
        out.append(mrf_term - 0.5 * quad)
    return np.array(out)


def test_conditional_logweights_match_direct_formula():
    rng = np.random.default_rng(3)
    geom = GridGeometry(3, 4)
    m = 0.1 + rng.random((6, 3))
    lib = Library(m)
    noise = NoiseModel(0.05 + rng.random(6) * 0.1)
    beta = np.array([0.2, 0.5, 0.1])
    z = oracles.random_admissible_field(rng, 3, geom.n_pixels)
    for n in (0, 5, 11):
        x_n = rng.random(3)
        y_n = rng.random(6)
        got = mrf.conditional_label_logweights(n, z, x_n, y_n, lib, noise, beta, geom)
        want = _direct_logweights(n, z, x_n, y_n, m, noise.variances, beta, geom)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_conditional_is_the_joint_conditional():
    """Normalised weights equal the conditional of the enumerated joint.

    On a 1x2 image the joint over (z_0, z_1) at fixed abundances is
    psi * exp(sum_r beta_r phi_r) * N(y_0 | ...) * N(y_1 | ...); the
    single-pixel conditional distribution must match it exactly,
    including the factor 2 from ordered neighbour pairs.
    """
    rng = np.random.default_rng(17)
    geom = GridGeometry(1, 2)
    m = 0.1 + rng.random((4, 2))
    lib = Library(m)
    variances = np.full(4, 0.05)
    noise = NoiseModel(variances)
    beta = np.array([0.7, 0.3])
    x = rng.random((2, 2))
    y = rng.random((4, 2))
    cfgs = mrf.admissible_configs(2)

    def loglik(n, cfg):
        resid = y[:, n] - m @ (x[:, n] * cfg)
        return -0.5 * np.sum(resid**2 / variances)

    for c1 in cfgs:  # condition on each state of pixel 1
        z = np.ascontiguousarray(np.stack([cfgs[0], c1], axis=1).astype(np.uint8))
        joint = np.array(
            [
                beta @ oracles.brute_phi(
                    np.stack([c0, c1], axis=1).astype(np.uint8), 1, 2
                )
                + loglik(0, c0)
                + loglik(1, c1)
                for c0 in cfgs
            ]
        )
        want = np.exp(joint - joint.max())
        want /= want.sum()
        lw = mrf.conditional_label_logweights(0, z, x[:, 0], y[:, 0], lib, noise, beta, geom)
        got = np.exp(lw - lw.max())
        got /= got.sum()
        assert np.allclose(got, want, rtol=1e-10, atol=1e-12)


def test_conditional_logweights_validation():
    geom = GridGeometry(1, 2)
    lib = Library(np.ones((3, 2)))
    noise = NoiseModel(np.ones(3))
    z = np.ones((2, 2), dtype=np.uint8)
    good = dict(x_n=np.ones(2), y_n=np.ones(3), lib=lib, noise=noise,
                beta=np.array([0.1, 0.1]), geom=geom)
    mrf.conditional_label_logweights(0, z, **good)
    with pytest.raises(ValueError):
        mrf.conditional_label_logweights(0, z, **{**good, "x_n": np.ones(3)})
    with pytest.raises(ValueError):
        mrf.conditional_label_logweights(0, z, **{**good, "y_n": np.ones(4)})
    with pytest.raises(ValueError):
        mrf.conditional_label_logweights(0, z, **{**good, "beta": np.array([-0.1, 0.0])})
    with pytest.raises(ValueError):
        mrf.conditional_label_logweights(0, z, **{**good, "noise": NoiseModel(np.ones(4))})


def test_sample_pixel_label_distribution():
    rng = make_rng(0)
    target = np.array([0.2, 0.3, 0.5])
    lw = np.log(target) + 7.0  # arbitrary shift must not matter
    counts = np.zeros(3)
    n = 60_000
    for _ in range(n):
        cfg = mrf.sample_pixel_label(rng, lw)
        counts[int(np.dot(cfg, [1, 2])) - 1] += 1
    assert np.abs(counts / n - target).max() < 0.01


def test_sample_pixel_label_validation():
    rng = make_rng(0)
    with pytest.raises(ValueError):
        mrf.sample_pixel_label(rng, np.zeros(4))  # 4 is not 2^R - 1
    with pytest.raises(ValueError):
        mrf.sample_pixel_label(rng, np.array([0.0, np.nan, 0.0]))
    with pytest.raises(NumericError):
        mrf.sample_pixel_label(rng, np.full(3, -np.inf))


# ----------------------------------------------------------- visit orders

def test_pixel_order_raster():
    geom = GridGeometry(3, 4)
    assert np.array_equal(mrf.pixel_order(geom, "raster"), np.arange(12))


def test_pixel_order_chromatic_classes_are_independent():
    geom = GridGeometry(5, 6)
    order = mrf.pixel_order(geom, "chromatic")
    assert sorted(order.tolist()) == list(range(geom.n_pixels))
    # pixels of the same colour class are never neighbours
    def color(n):
        row, col = geom.pixel_coords(n)
        return (row % 2, col % 2)
    nbrs, counts = geom.neighbor_table
    for n in range(geom.n_pixels):
        for m in nbrs[n, : counts[n]]:
            assert color(n) != color(int(m))
    with pytest.raises(ValueError):
        mrf.pixel_order(geom, "spiral")


# ------------------------------------------------------- prior field sweeps

def test_label_sweep_kernel_matches_python_twin():
    for seed, (n_row, n_col, n_r), schedule in [
        (0, (3, 3, 2), "raster"),
        (1, (4, 5, 3), "raster"),
        (2, (4, 5, 3), "chromatic"),
        (3, (2, 8, 4), "raster"),
        (4, (6, 2, 1), "chromatic"),
    ]:
        geom = GridGeometry(n_row, n_col)
        rng = np.random.default_rng(seed)
        cfgs = mrf.admissible_configs(n_r)
        z_kernel = oracles.random_admissible_field(rng, n_r, geom.n_pixels)
        z_python = z_kernel.copy()
        beta = rng.random(n_r)
        like = rng.normal(size=(cfgs.shape[0], geom.n_pixels))
        u = rng.random(geom.n_pixels)
        nbrs, counts = geom.neighbor_table
        order = mrf.pixel_order(geom, schedule)
        label_sweep(z_kernel, beta, like, cfgs, u, nbrs, counts, order)
        oracles.label_sweep_python(z_python, beta, like, cfgs, u, nbrs, counts, order)
        assert np.array_equal(z_kernel, z_python)


def test_prior_fields_stay_admissible():
    geom = GridGeometry(5, 5)
    rng = make_rng(2)
    for z in mrf.iter_prior_fields(rng, np.array([0.4, 0.4, 0.4]), geom, 20):
        assert mrf.psi(z) == 1


def test_iter_prior_fields_yields_live_buffer():
    geom = GridGeometry(3, 3)
    seen = []
    for z in mrf.iter_prior_fields(make_rng(0), np.array([0.3]), geom, 2):
        seen.append(z)
    assert seen[0] is seen[1]  # documented: the working buffer is yielded


def test_iter_prior_fields_validation():
    geom = GridGeometry(2, 2)
    with pytest.raises(ValueError):
        list(mrf.iter_prior_fields(make_rng(0), np.array([-0.1]), geom, 1))
    bad_shape = np.ones((2, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        list(mrf.iter_prior_fields(make_rng(0), np.array([0.1, 0.1]), geom, 1, init=bad_shape))
    empty_pixel = np.array([[1, 0, 1, 1], [1, 0, 1, 1]], dtype=np.uint8)
    with pytest.raises(ValueError):
        list(mrf.iter_prior_fields(make_rng(0), np.array([0.1, 0.1]), geom, 1, init=empty_pixel))


def test_sample_prior_field_deterministic_and_seeded():
    geom = GridGeometry(6, 6)
    beta = np.array([0.3, 0.5])
    a = mrf.sample_prior_field(make_rng(7), beta, geom, sweeps=15)
    b = mrf.sample_prior_field(make_rng(7), beta, geom, sweeps=15)
    assert np.array_equal(a.labels, b.labels)
    c = mrf.sample_prior_field(make_rng(8), beta, geom, sweeps=15)
    assert not np.array_equal(a.labels, c.labels)


def test_sample_prior_field_zero_sweeps_returns_init():
    geom = GridGeometry(2, 2)
    init = SupportField(np.ones((2, 4), dtype=np.uint8))
    out = mrf.sample_prior_field(make_rng(0), np.array([0.3, 0.3]), geom, sweeps=0, init=init)
    assert out is init
    drawn = mrf.sample_prior_field(make_rng(0), np.array([0.3, 0.3]), geom, sweeps=0)
    assert mrf.psi(drawn) == 1


def test_sample_prior_field_continues_from_init():
    geom = GridGeometry(4, 4)
    beta = np.array([0.4, 0.2])
    whole = mrf.sample_prior_field(make_rng(3), beta, geom, sweeps=6)
    rng = make_rng(3)
    part = mrf.sample_prior_field(rng, beta, geom, sweeps=4)
    rest = mrf.sample_prior_field(rng, beta, geom, sweeps=2, init=part)
    assert np.array_equal(whole.labels, rest.labels)


# ----------------------------------------------------- likelihood data table

def test_likelihood_logit_table_matches_residual_quadratics():
    rng = np.random.default_rng(11)
    n_l, n_r, n = 7, 3, 10
    m = 0.1 + rng.random((n_l, n_r))
    x = rng.random((n_r, n))
    sigma2 = 0.05 + rng.random(n_l) * 0.2
    cfgs = mrf.admissible_configs(n_r)
    y = rng.random((n_l, n))
    table = mrf.likelihood_logit_table(y, m, x, sigma2, cfgs)
    # direct quadratics (with the config-free term): differences between
    # configurations must agree because the table drops a per-pixel shift
    direct = np.empty_like(table)
    for c, cfg in enumerate(cfgs):
        resid = y - m @ (x * cfg[:, None])
        direct[c] = -0.5 * np.sum(resid**2 / sigma2[:, None], axis=0)
    assert np.allclose(
        table - table[0], direct - direct[0], rtol=1e-10, atol=1e-10
    )
