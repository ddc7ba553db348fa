import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gwsnake.gw import RandomStream
from gwsnake.limits import (
    ConditionalGaussianSpec,
    NotPSD,
    field_samples_to_csv,
    h_check,
    h_check_matrix,
    lifetime,
    limit_marginals,
    psd_factor,
    sample_conditional_field,
    sample_excursion,
    sample_excursions,
    vervaat,
)
from gwsnake.multinomial import IndexSetIK, limit_covariance
from gwsnake.trees import GridPath

from conftest import BINARY, TERNARY

REPS = 10**5


def _excursion_stats(m, seed):
    gen = RandomStream(seed, m).generator()
    maxima, mids = [], []
    batch = max(1, 2_000_000 // m)
    done = 0
    while done < REPS:
        b = min(batch, REPS - done)
        e = sample_excursions(m, b, gen)
        maxima.append(e.max(axis=1))
        mids.append(e[:, m // 2].copy())
        done += b
    return np.concatenate(maxima), np.concatenate(mids)


@pytest.fixture(scope="module")
def refinement():
    return {m: _excursion_stats(m, 77) for m in (512, 2048, 8192)}


def test_excursion_shape(rng):
    e = sample_excursions(64, 200, rng)
    assert e.shape == (200, 65)
    assert np.all(e[:, 0] == 0) and np.all(e[:, -1] == 0) and np.all(e >= 0)
    p = sample_excursion(16, rng)
    assert isinstance(p, GridPath) and p.steps == 16
    with pytest.raises(ValueError):
        sample_excursions(1, 1, rng)


def test_vervaat_unit():
    b = np.array([0.0, -1.0, 0.5, -2.0, 1.0, 0.0])
    assert vervaat(b).tolist() == [0.0, 3.0, 2.0, 1.0, 2.5, 0.0]


def test_max_refinement(refinement):
    a = refinement[2048][0].mean()
    b = refinement[8192][0].mean()
    assert abs(a / b - 1) <= 0.01


def test_midpoint_refinement(refinement):
    means = [refinement[m][1].mean() for m in (512, 2048, 8192)]
    assert max(means) / min(means) - 1 <= 0.01


# Grid excursions miss the true extrema between grid points; for a Gaussian walk
# with step variance 1/m the overshoot is 0.5826/sqrt(m) in mean.  The maximum of
# the Vervaat excursion loses it twice (bridge max and bridge min), e(1/2) once.
OVERSHOOT = 0.5826


def test_max_matches_limit_after_grid_correction(refinement):
    for m in (512, 2048, 8192):
        corrected = refinement[m][0].mean() + 2 * OVERSHOOT / np.sqrt(m)
        assert corrected == pytest.approx(np.sqrt(np.pi / 2), rel=0.003)


def test_midpoint_matches_limit_after_grid_correction(refinement):
    # e(1/2) is Maxwell with scale 1/2, mean sqrt(2/pi)
    for m in (512, 2048, 8192):
        corrected = refinement[m][1].mean() + OVERSHOOT / np.sqrt(m)
        assert corrected == pytest.approx(np.sqrt(2 / np.pi), rel=0.004)


def test_midpoint_law_invariant(refinement):
    d = stats.ks_2samp(refinement[2048][1], refinement[8192][1]).statistic
    assert d <= 0.02


def test_h_check_examples():
    p = GridPath([0, 1, 2, 1, 0])
    assert h_check(p, 0.25, 0.75) == 1
    assert h_check(p, 0.5, 0.5) == p(0.5)
    assert h_check(p, 0.75, 0.25) == h_check(p, 0.25, 0.75)
    # off-grid points snap to the nearest grid point
    assert h_check(p, 0.49, 0.51) == 2
    with pytest.raises(ValueError):
        h_check(p, -0.1, 0.5)


def test_lifetime_scaling():
    e = GridPath([0, 1, 0])
    assert lifetime(e, 4.0)(0.5) == 1.0


def test_field_kernel_single_point_identity(rng):
    ik = IndexSetIK(TERNARY)
    h = lifetime(sample_excursion(256, rng), 2.0)
    spec = ConditionalGaussianSpec([0.4], h, kernel="field", ik=ik)
    np.testing.assert_array_equal(spec.covariance(), h_check(h, 0.4, 0.4) * limit_covariance(ik))


@given(st.integers(0, 2**32), st.integers(2, 8))
def test_snake_kernel_psd(seed, q):
    gen = np.random.default_rng(seed)
    h = lifetime(sample_excursion(128, gen), 1.0)
    pts = np.sort(gen.uniform(0, 1, q))
    cov = ConditionalGaussianSpec(pts, h, kernel="snake", beta2=1.0).covariance()
    assert np.linalg.eigvalsh(cov).min() >= -1e-9


def test_field_samples():
    gen = RandomStream(5, 0).generator()
    ik = IndexSetIK(BINARY)
    h = lifetime(sample_excursion(512, gen), 1.0)
    pts = [0.25, 0.5, 0.75]
    spec = ConditionalGaussianSpec(pts, h, kernel="field", ik=ik)
    x = sample_conditional_field(spec, gen, size=REPS)
    assert x.shape == (REPS, 3, 3)
    assert np.abs(x.sum(axis=2)).max() <= 1e-9
    flat = x.reshape(REPS, -1)
    se = flat.std(axis=0) / np.sqrt(REPS)
    assert np.all(np.abs(flat.mean(axis=0)) <= 3 * se + 1e-12)
    emp = flat.T @ flat / REPS
    cov = spec.covariance()
    big = np.abs(cov) > 0.05
    np.testing.assert_allclose(emp[big], cov[big], rtol=0.03)


def test_combo_and_snake_kernels(rng):
    ik = IndexSetIK(BINARY)
    h = lifetime(sample_excursion(256, rng), 1.0)
    pts = [0.3, 0.6]
    combo = ConditionalGaussianSpec(pts, h, kernel="combo", ik=ik, lam=(0, 1, -1)).covariance()
    snake = ConditionalGaussianSpec(pts, h, kernel="snake", beta2=1.0).covariance()
    np.testing.assert_allclose(combo, snake)
    assert sample_conditional_field(ConditionalGaussianSpec(pts, h), rng).shape == (2,)
    with pytest.raises(ValueError):
        ConditionalGaussianSpec(pts, h, kernel="field").covariance()
    with pytest.raises(ValueError):
        ConditionalGaussianSpec(pts, h, kernel="other", ik=ik).covariance()


def test_not_psd():
    with pytest.raises(NotPSD):
        psd_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))
    f = psd_factor(np.array([[1.0, 1.0], [1.0, 1.0]]))
    np.testing.assert_allclose(f @ f.T, [[1, 1], [1, 1]], atol=1e-12)


def test_limit_marginal_variance():
    ik = IndexSetIK(BINARY)
    x = limit_marginals(ik, 0.5, 40000, np.random.default_rng(1), m=1024)
    # Var G_{2,1}(1/2) = (1/4) E h(1/2) = (1/4) * 2 E e(1/2) for sigma^2 = 1
    e = sample_excursions(1024, 40000, np.random.default_rng(2))[:, 512]
    assert x.var() == pytest.approx(0.25 * 2 * e.mean(), rel=0.03)


def test_field_csv():
    x = np.arange(12.0).reshape(2, 2, 3)
    text = field_samples_to_csv(x, [0.25, 0.5], IndexSetIK(BINARY))
    lines = text.splitlines()
    assert lines[0] == "s,k,j,value,replicate"
    assert len(lines) == 1 + 12
    assert lines[2] == "0.25,2,1,1.0,0"
    assert field_samples_to_csv(np.ones((1, 2)), [0.1, 0.2], None).splitlines()[1] == "0.1,,,1.0,0"
