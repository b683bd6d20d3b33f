import numpy as np
import pytest

from lqcdlab.dirac import DiracParams
from lqcdlab.fields import gen_clover, gen_gauge
from lqcdlab.geometry import LatticeGeometry
from lqcdlab.oracle import (
    MAX_DENSE_DIM,
    assemble_dirac_dense,
    assemble_schur_dense,
    dense_lstsq,
    dense_solve,
    parity_component_indices,
)


def _block_sparsity(a: np.ndarray, n_sites: int) -> np.ndarray:
    blocks = a.reshape(n_sites, 12, n_sites, 12)
    return (np.abs(blocks).max(axis=(1, 3)) > 1e-14).sum(axis=1)


def test_block_structure_tiny_lattice():
    # extent-2 directions fold +mu and -mu onto the same neighbor site:
    # self + 4 distinct neighbors
    geom = LatticeGeometry((2, 2, 2, 2))
    gauge = gen_gauge(geom, "random", seed=90)
    clover = gen_clover(geom, "random", seed=91)
    a = assemble_dirac_dense(DiracParams(m0=-0.5), gauge, clover)
    assert a.shape == (12 * 16, 12 * 16)
    counts = _block_sparsity(a, geom.n_sites)
    assert np.all(counts == 5)


def test_block_structure_44():
    geom = LatticeGeometry((4, 4, 4, 4))
    gauge = gen_gauge(geom, "random", seed=92)
    clover = gen_clover(geom, "random", seed=93)
    a = assemble_dirac_dense(DiracParams(m0=-0.5), gauge, clover)
    counts = _block_sparsity(a, geom.n_sites)
    assert np.all(counts == 9)  # self + 8 distinct neighbors


def test_free_field_diagonal():
    geom = LatticeGeometry((2, 2, 2, 2))
    gauge = gen_gauge(geom, "unit")
    clover = gen_clover(geom, "zero")
    a = assemble_dirac_dense(DiracParams(m0=0.25), gauge, clover)
    ones = np.ones(a.shape[0])
    assert np.abs(a @ ones - 0.25 * ones).max() < 1e-13


def test_size_guard():
    geom = LatticeGeometry((8, 8, 8, 8))
    gauge = gen_gauge(geom, "unit")
    clover = gen_clover(geom, "zero")
    assert 12 * geom.n_sites > MAX_DENSE_DIM
    with pytest.raises(ValueError, match="dense"):
        assemble_dirac_dense(DiracParams(), gauge, clover)


def test_parity_component_indices():
    geom = LatticeGeometry((2, 2, 2, 2))
    ev = parity_component_indices(geom, 0)
    od = parity_component_indices(geom, 1)
    assert len(ev) == len(od) == 12 * 8
    assert not set(ev) & set(od)
    assert ev[0] == 0 and ev[1] == 1


def test_schur_dense_shape():
    geom = LatticeGeometry((2, 2, 2, 2))
    gauge = gen_gauge(geom, "random", seed=94)
    clover = gen_clover(geom, "random", seed=95)
    s = assemble_schur_dense(DiracParams(m0=-0.5), gauge, clover)
    assert s.shape == (12 * 8, 12 * 8)


@pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
def test_dense_solve_and_singularity():
    rng = np.random.default_rng(96)
    a = rng.normal(size=(20, 20)) + 1j * rng.normal(size=(20, 20)) + 5 * np.eye(20)
    x = rng.normal(size=(20, 2)) + 1j * rng.normal(size=(20, 2))
    got = dense_solve(a, a @ x)
    assert np.abs(got - x).max() < 1e-10
    singular = np.zeros((4, 4), dtype=np.complex128)
    singular[0, 0] = 1.0
    with pytest.raises(np.linalg.LinAlgError, match="singular"):
        dense_solve(singular, np.ones(4, dtype=np.complex128))


def test_dense_lstsq_overdetermined():
    rng = np.random.default_rng(97)
    a = rng.normal(size=(10, 4)) + 1j * rng.normal(size=(10, 4))
    y = rng.normal(size=4) + 1j * rng.normal(size=4)
    got = dense_lstsq(a, a @ y)
    assert np.abs(got - y).max() < 1e-10
