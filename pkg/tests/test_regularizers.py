import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsrfuse.regularizers import (
    SchattenConfig,
    TvConfig,
    circulant_diff,
    col_diff,
    col_diff_adjoint,
    diff_norm,
    row_diff,
    row_diff_adjoint,
    schatten_gradient,
    schatten_majorizer_value,
    schatten_value,
    schatten_weight,
    schatten_weight_terms,
    tv_gradient,
    tv_majorizer_value,
    tv_value,
    tv_weights,
)

from _oracles import central_gradient, dense_diff, rel_error, schatten_by_svd, tv_by_loops

CFG = SchattenConfig(p=0.5, tau=1.0)
TV = TvConfig(q=0.5, epsilon=1e-3)


# ---------------------------------------------------------------------------
# difference operators
# ---------------------------------------------------------------------------

def test_circulant_diff_structure():
    h = circulant_diff(4)
    assert np.array_equal(h, dense_diff(4))
    assert np.allclose(h.sum(axis=1), 0.0)
    assert np.allclose(h @ np.ones(4), 0.0)


def test_matrix_free_diffs_match_dense():
    rng = np.random.default_rng(0)
    img = rng.normal(size=(5, 7))
    h_rows = circulant_diff(5)
    h_cols = circulant_diff(7)
    assert np.allclose(row_diff(img), h_rows @ img)
    assert np.allclose(col_diff(img), img @ h_cols.T)
    # vectorized forms: H_y = I (x) H_rows, H_x = H_cols (x) I on vec(img)
    vec = img.ravel(order="F")
    hy = np.kron(np.eye(7), h_rows)
    hx = np.kron(h_cols, np.eye(5))
    assert np.allclose(row_diff(img).ravel(order="F"), hy @ vec)
    assert np.allclose(col_diff(img).ravel(order="F"), hx @ vec)


def test_diff_adjoints():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 4))
    b = rng.normal(size=(6, 4))
    assert np.sum(row_diff(a) * b) == pytest.approx(np.sum(a * row_diff_adjoint(b)), rel=1e-12)
    assert np.sum(col_diff(a) * b) == pytest.approx(np.sum(a * col_diff_adjoint(b)), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40))
def test_diff_norm_matches_dense_svd(n):
    dense = np.linalg.svd(circulant_diff(n), compute_uv=False)[0] if n > 0 else 0.0
    assert diff_norm(n) == pytest.approx(dense, abs=1e-12)


# ---------------------------------------------------------------------------
# smoothed Schatten-p
# ---------------------------------------------------------------------------

def test_schatten_value_zero_matrix():
    assert schatten_value(np.zeros((3, 5)), CFG) == pytest.approx(3.0, rel=1e-14)
    cfg2 = SchattenConfig(p=0.5, tau=4.0)
    assert schatten_value(np.zeros((3, 5)), cfg2) == pytest.approx(3 * 4**0.25, rel=1e-14)


def test_schatten_value_identity():
    m = 4
    assert schatten_value(np.eye(m), CFG) == pytest.approx(m * 2**0.25, rel=1e-14)


def test_schatten_value_matches_svd_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 5))
    assert schatten_value(x, CFG) == pytest.approx(schatten_by_svd(x, 0.5, 1.0), rel=1e-10)
    tall = rng.normal(size=(6, 3))  # more rows than columns: zero singular values count
    assert schatten_value(tall, CFG) == pytest.approx(schatten_by_svd(tall, 0.5, 1.0), rel=1e-10)


def test_schatten_value_orthogonal_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 6))
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    assert schatten_value(q @ x, CFG) == pytest.approx(schatten_value(x, CFG), rel=1e-12)


def test_schatten_value_shrinks_toward_floor():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 4))
    vals = [schatten_value(t * x, CFG) for t in (1.0, 0.5, 0.1, 0.0)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(3.0, rel=1e-14)


def test_schatten_weight_zero_matrix():
    assert np.allclose(schatten_weight(np.zeros((3, 4)), CFG), np.eye(3))


def test_schatten_weight_identity():
    expected = 2 ** (-0.75) * np.eye(4)
    assert np.allclose(schatten_weight(np.eye(4), CFG), expected, atol=1e-14)


def test_schatten_weight_spd_and_bounded():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(5, 7)) * 3
    w, w_sig = schatten_weight_terms(x, CFG)
    assert np.allclose(w, w.T, atol=1e-12)
    eigs = np.linalg.eigvalsh(w)
    assert eigs[0] > 0
    assert eigs[-1] <= CFG.tau ** ((CFG.p - 2) / 2) + 1e-12
    assert w_sig == pytest.approx(eigs[-1], rel=1e-10)


def test_schatten_majorizer_tangent_at_anchor():
    rng = np.random.default_rng(6)
    for _ in range(10):
        anchor = rng.normal(size=(4, 6)) * rng.uniform(0.1, 3)
        w = schatten_weight(anchor, CFG)
        value = schatten_value(anchor, CFG)
        major = schatten_majorizer_value(anchor, w, CFG)
        assert abs(major - value) <= 1e-9 * abs(value)


def test_schatten_majorizer_dominates():
    rng = np.random.default_rng(7)
    anchor = rng.normal(size=(4, 6))
    w = schatten_weight(anchor, CFG)
    for _ in range(100):
        x = rng.normal(size=(4, 6)) * rng.uniform(0.05, 5)
        assert schatten_majorizer_value(x, w, CFG) >= schatten_value(x, CFG) - 1e-10


def test_schatten_majorizer_zero_case():
    z = np.zeros((3, 5))
    w = schatten_weight(z, CFG)
    assert schatten_majorizer_value(z, w, CFG) == pytest.approx(3.0, rel=1e-12)
    assert schatten_value(z, CFG) == pytest.approx(3.0, rel=1e-14)


def test_schatten_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(4, 5))
    grad = schatten_gradient(x, CFG)
    fd = central_gradient(lambda z: schatten_value(z, CFG), x)
    assert rel_error(grad, fd) <= 1e-5


def test_schatten_config_validation():
    with pytest.raises(ValueError):
        SchattenConfig(p=0.0)
    with pytest.raises(ValueError):
        SchattenConfig(p=0.5, tau=0.0)


# ---------------------------------------------------------------------------
# smoothed lq total variation
# ---------------------------------------------------------------------------

def test_tv_value_constant_image():
    img = np.full((4, 6), 2.5)
    expected = 2 * 4 * 6 * TV.epsilon ** (TV.q / 2)
    assert tv_value(img, TV) == pytest.approx(expected, rel=1e-12)


def test_tv_value_matches_loop_oracle():
    rng = np.random.default_rng(9)
    img = rng.normal(size=(5, 7))
    assert tv_value(img, TV) == pytest.approx(tv_by_loops(img, TV.q, TV.epsilon), rel=1e-12)


def test_tv_value_spike_enumeration():
    img = np.zeros((3, 3))
    img[1, 1] = 2.0
    got = tv_value(img, TV)
    assert got == pytest.approx(tv_by_loops(img, TV.q, TV.epsilon), rel=1e-12)
    # two nonzero differences per direction, the rest sit at the epsilon floor
    per_direction = 7 * TV.epsilon ** (TV.q / 2) + 2 * (4.0 + TV.epsilon) ** (TV.q / 2)
    assert got == pytest.approx(2 * per_direction, rel=1e-12)


def test_tv_l1_limit_on_step_image():
    # q=1, small epsilon: approaches anisotropic l1-TV within the smoothing bound
    img = np.zeros((6, 6))
    img[:, 3:] = 1.0
    eps = 1e-10
    cfg = TvConfig(q=1.0, epsilon=eps)
    l1 = 0.0
    for a in range(6):
        for b in range(6):
            l1 += abs(img[a, b] - img[a, (b + 1) % 6]) + abs(img[a, b] - img[(a + 1) % 6, b])
    assert abs(tv_value(img, cfg) - l1) <= 2 * 36 * np.sqrt(eps)


def test_tv_weights_constant_image():
    u, v = tv_weights(np.full((3, 4), 1.0), TV)
    floor = TV.epsilon ** ((TV.q - 2) / 2)
    assert np.allclose(u, floor)
    assert np.allclose(v, floor)


def test_tv_weights_q2_all_ones():
    cfg = TvConfig(q=2.0, epsilon=1e-3)
    u, v = tv_weights(np.random.default_rng(10).normal(size=(4, 5)), cfg)
    assert np.allclose(u, 1.0)
    assert np.allclose(v, 1.0)


def test_tv_weights_decrease_with_difference():
    img = np.zeros((2, 4))
    img[0, 1] = 0.5
    img2 = img.copy()
    img2[0, 1] = 2.0
    u1, _ = tv_weights(img, TV)
    u2, _ = tv_weights(img2, TV)
    assert u2[0, 0] < u1[0, 0]
    assert u2[0, 1] < u1[0, 1]


def test_tv_weights_bounded():
    rng = np.random.default_rng(11)
    u, v = tv_weights(rng.normal(size=(6, 6)), TV)
    ceiling = TV.epsilon ** ((TV.q - 2) / 2)
    for w in (u, v):
        assert np.all(w > 0)
        assert np.all(w <= ceiling + 1e-12)


def test_tv_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    img = rng.normal(size=(4, 5))
    grad = tv_gradient(img, TV)
    fd = central_gradient(lambda z: tv_value(z, TV), img)
    assert rel_error(grad, fd) <= 1e-5


def test_tv_majorizer_tangent_and_dominating():
    rng = np.random.default_rng(13)
    anchor = rng.normal(size=(5, 4))
    value = tv_value(anchor, TV)
    assert abs(tv_majorizer_value(anchor, anchor, TV) - value) <= 1e-9 * abs(value)
    for _ in range(100):
        x = rng.normal(size=(5, 4)) * rng.uniform(0.05, 5)
        assert tv_majorizer_value(x, anchor, TV) >= tv_value(x, TV) - 1e-10


def test_tv_config_validation():
    with pytest.raises(ValueError):
        TvConfig(q=0.0)
    with pytest.raises(ValueError):
        TvConfig(q=0.5, epsilon=0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 10.0))
def test_schatten_majorizer_dominates_property(seed, scale):
    rng = np.random.default_rng(seed)
    anchor = rng.normal(size=(3, 4))
    x = rng.normal(size=(3, 4)) * scale
    w = schatten_weight(anchor, CFG)
    assert schatten_majorizer_value(x, w, CFG) >= schatten_value(x, CFG) - 1e-10
