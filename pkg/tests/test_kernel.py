import numpy as np
import pytest

from fracfb.kernel import Convolver, InteractionKernel, canonical_offsets, near_table, tent_integral
from oracles import cell_pair_reference, tent_reference


@pytest.mark.parametrize("sigma", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("d", [(1, 0), (1, 1), (0, 2), (2, 3), (4, 0)])
def test_tent_integral_matches_cartesian_quadrature(sigma, d):
    assert tent_integral(d, sigma) == pytest.approx(tent_reference(d, sigma), rel=1e-8)


@pytest.mark.parametrize("sigma", [0.3, 0.8])
@pytest.mark.parametrize("d", [(3, 2), (4, 0), (0, 4)])
def test_tent_integral_matches_4d_gauss(sigma, d):
    assert tent_integral(d, sigma) == pytest.approx(cell_pair_reference(d, sigma), rel=1e-8)


def test_tent_integral_rejects_zero_offset():
    with pytest.raises(ValueError):
        tent_integral((0, 0), 0.5)


def test_canonical_offsets_cover_near_disc():
    offs = canonical_offsets(4.0)
    assert (0, 1) in offs and (0, 4) in offs and (2, 3) in offs
    assert (3, 3) not in offs and (0, 0) not in offs
    assert all(0 <= a <= b for a, b in offs)


@pytest.mark.parametrize("sigma", [0.3, 0.5, 0.8])
def test_weights_positive_and_symmetric(sigma):
    k = InteractionKernel.build(sigma, 0.1)
    w = k.offset_array(9, 9)
    assert w[8, 8] == 0.0
    off = np.ones_like(w, bool)
    off[8, 8] = False
    assert np.all(w[off] > 0)
    np.testing.assert_array_equal(w, w[::-1, ::-1])
    np.testing.assert_array_equal(w, w[::-1, :])
    np.testing.assert_array_equal(w, w.T)


def test_far_rule_is_midpoint():
    k = InteractionKernel.build(0.5, 0.02, near_radius=2.0)
    h = 0.02
    assert k.weight(3, 0) == pytest.approx(h**4 / (3 * h) ** 2.5, rel=1e-14)
    assert k.weight(0, 2) == pytest.approx(h**1.5 * tent_integral((0, 2), 0.5), rel=1e-12)


def test_near_weights_exceed_midpoint_for_adjacent_cells():
    # the kernel is convex in |z|, so the cell average beats the midpoint value
    k = InteractionKernel.build(0.8, 1.0)
    assert k.unit_weight(1, 0) > 1.0


def test_kernel_rejects_classical_order():
    with pytest.raises(ValueError, match="sigma"):
        InteractionKernel.build(1.0, 0.1)


def test_table_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACFB_CACHE_DIR", str(tmp_path))
    first = near_table(0.37, 2.0)
    files = sorted(p.suffix for p in tmp_path.iterdir())
    assert files == [".bin", ".json"]
    np.testing.assert_array_equal(near_table(0.37, 2.0), first)
    # a corrupted payload fails its checksum and is recomputed
    binf = next(tmp_path.glob("*.bin"))
    binf.write_bytes(b"\0" * binf.stat().st_size)
    np.testing.assert_array_equal(near_table(0.37, 2.0), first)


def test_convolver_matches_direct_sum():
    rng = np.random.default_rng(3)
    chi = (rng.random((12, 10)) < 0.4).astype(float)
    k = InteractionKernel.build(0.5, 0.1)
    conv = Convolver(k, chi.shape)
    out = conv(chi)
    direct = np.zeros_like(chi)
    for i in range(12):
        for j in range(10):
            for a in range(12):
                for b in range(10):
                    if chi[a, b]:
                        direct[i, j] += k.weight(i - a, j - b)
    np.testing.assert_allclose(out, direct, rtol=1e-10, atol=1e-14)
