import numpy as np
import pytest

from lqcdlab.dirac import (
    BYTES_PER_VALUE,
    FLOPS_PER_SITE_RHS,
    VALUES_PER_SITE_FIXED,
    VALUES_PER_SITE_RHS,
    DiracParams,
    FlopCounter,
    account_traffic,
    apply_dirac,
)
from lqcdlab.fields import BlockSpinorField, Layout, gen_clover, gen_gauge, gen_spinor
from lqcdlab.geometry import LatticeGeometry
from lqcdlab.oracle import assemble_dirac_dense


@pytest.fixture(scope="module")
def problem():
    geom = LatticeGeometry((4, 4, 4, 4))
    gauge = gen_gauge(geom, "random", seed=21)
    clover = gen_clover(geom, "random", scale=0.1, seed=22)
    params = DiracParams(m0=-0.5)
    dense = assemble_dirac_dense(params, gauge, clover)
    return geom, gauge, clover, params, dense


def test_params_validation():
    with pytest.raises(ValueError):
        DiracParams(m0=0.0, a=0.5)


def test_traffic_ledger_frozen():
    assert FLOPS_PER_SITE_RHS == 2574
    assert (VALUES_PER_SITE_RHS, VALUES_PER_SITE_FIXED, BYTES_PER_VALUE) == (168, 114, 16)
    assert account_traffic(1) == {"flops_per_site": 2574, "bytes_per_site": 4512}
    assert account_traffic(16) == {"flops_per_site": 41184, "bytes_per_site": 44832}
    with pytest.raises(ValueError):
        account_traffic(0)


def test_flop_counter_weights():
    c = FlopCounter(cmul=2, cadd=3, rmul=4)
    assert c.total_flops == 12 + 6 + 8


@pytest.mark.parametrize("layout", [Layout.RHS_MAJOR, Layout.COMPONENT_MAJOR])
@pytest.mark.parametrize("b", [1, 3])
def test_matches_dense_oracle(problem, layout, b):
    geom, gauge, clover, params, dense = problem
    psi = gen_spinor(geom.n_sites, b, layout, seed=30 + b, geom=geom)
    eta = apply_dirac(params, gauge, clover, psi)
    ref = dense @ psi.columns()
    err = np.linalg.norm(eta.columns() - ref) / np.linalg.norm(ref)
    assert err < 1e-13
    assert eta.layout == layout and eta.b == b


def test_free_field_identity():
    geom = LatticeGeometry((4, 4, 4, 4))
    gauge = gen_gauge(geom, "unit")
    clover = gen_clover(geom, "zero")
    params = DiracParams(m0=-0.5)
    psi = BlockSpinorField.zeros(geom.n_sites, 2, Layout.RHS_MAJOR, geom=geom)
    psi.set_ksi(np.full((geom.n_sites, 12, 2), 1.0 + 0.5j, dtype=np.complex128))
    eta = apply_dirac(params, gauge, clover, psi)
    assert np.abs(eta.ksi() - params.m0 * psi.ksi()).max() < 1e-14


def test_layout_invariance(problem):
    geom, gauge, clover, params, _ = problem
    psi1 = gen_spinor(geom.n_sites, 4, Layout.RHS_MAJOR, seed=40, geom=geom)
    psi2 = psi1.convert(Layout.COMPONENT_MAJOR)
    eta1 = apply_dirac(params, gauge, clover, psi1)
    eta2 = apply_dirac(params, gauge, clover, psi2)
    scale = np.abs(eta1.ksi()).max()
    assert np.abs(eta1.ksi() - eta2.ksi()).max() <= 1e-13 * scale


def test_instrumented_flops_match_ledger(problem):
    geom, gauge, clover, params, _ = problem
    b = 3
    psi = gen_spinor(geom.n_sites, b, Layout.COMPONENT_MAJOR, seed=41, geom=geom)
    flops = FlopCounter()
    apply_dirac(params, gauge, clover, psi, flops=flops)
    per_site_rhs = flops.total_flops / (geom.n_sites * b)
    ratio = per_site_rhs / FLOPS_PER_SITE_RHS
    assert 0.85 <= ratio <= 1.15, f"instrumented {per_site_rhs} vs ledger {FLOPS_PER_SITE_RHS}"


def test_perf_record(problem):
    geom, gauge, clover, params, _ = problem
    psi = gen_spinor(geom.n_sites, 2, Layout.RHS_MAJOR, seed=42, geom=geom)
    perf = []
    apply_dirac(params, gauge, clover, psi, perf=perf)
    (rec,) = perf
    assert rec.sites == geom.n_sites and rec.b == 2 and rec.layout == 1
    assert rec.flops == FLOPS_PER_SITE_RHS * geom.n_sites * 2
    assert rec.bytes == account_traffic(2)["bytes_per_site"] * geom.n_sites
    assert rec.seconds > 0 and rec.gflops > 0


def test_linearity(problem):
    geom, gauge, clover, params, _ = problem
    a = gen_spinor(geom.n_sites, 2, Layout.RHS_MAJOR, seed=43, geom=geom)
    c = gen_spinor(geom.n_sites, 2, Layout.RHS_MAJOR, seed=44, geom=geom)
    summed = BlockSpinorField.zeros_like(a)
    summed.set_ksi(a.ksi() + 2.0 * c.ksi())
    lhs = apply_dirac(params, gauge, clover, summed).ksi()
    rhs = apply_dirac(params, gauge, clover, a).ksi() + 2.0 * apply_dirac(params, gauge, clover, c).ksi()
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()
