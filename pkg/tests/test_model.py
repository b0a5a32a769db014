import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkesnp import (
    ConfigError,
    ConstantMark,
    EmpiricalMarks,
    ExponentialKernel,
    ExponentialMarks,
    HawkesModel,
    IdentityMark,
    MarkSpec,
    NormDivergenceError,
    PiecewiseConstantMark,
    PiecewiseLinearKernel,
    PowerLawKernel,
    SampledKernel,
    StabilityError,
    ZeroKernel,
    kernel_norm,
    mean_rate,
    norm_matrix,
    spectral_radius,
)


def test_kernel_norm_exponential():
    assert kernel_norm(ExponentialKernel(0.1, 0.2)) == pytest.approx(0.5, abs=1e-15)


def test_kernel_norm_powerlaw_closed_form():
    # alpha * nu^(1-beta) / (beta-1) = 0.1 * 0.1^-0.5 / 0.5
    expected = 0.1 * 0.1 ** (-0.5) / 0.5
    assert kernel_norm(PowerLawKernel(0.1, 0.1, 1.5)) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.63246, abs=1e-5)


def test_kernel_norm_zero():
    assert kernel_norm(ZeroKernel()) == 0.0


def test_powerlaw_divergent_norm():
    with pytest.raises(NormDivergenceError):
        kernel_norm(PowerLawKernel(0.1, 0.1, 1.0))


def test_piecewise_linear_norm_exact():
    # Triangle (0,0)-(0.5,1)-(1,0): area 1/2.
    tri = PiecewiseLinearKernel(((0.0, 0.0), (0.5, 1.0), (1.0, 0.0)))
    assert kernel_norm(tri) == pytest.approx(0.5, abs=1e-15)
    assert tri.integral(0.25, 0.75) == pytest.approx(0.375, abs=1e-12)


@given(st.floats(min_value=-1e6, max_value=-1e-9))
def test_causality_negative_times(t):
    kernels = [
        ExponentialKernel(0.3, 1.1),
        PowerLawKernel(0.2, 0.5, 2.0),
        PiecewiseLinearKernel(((0.0, 1.0), (2.0, 0.0))),
        SampledKernel(0.0, 0.5, (1.0, 0.5, 0.0)),
        ZeroKernel(),
    ]
    for k in kernels:
        assert k(t) == 0.0


def test_sampled_norm_converges_to_closed_form():
    # Trapezoid error drops ~4x per halving for a smooth kernel.
    exact = 0.5 * (1 - math.exp(-0.2 * 60.0)) / 0.1 * 0.1  # int_0^60 0.1 e^{-0.2t}
    errs = []
    for n in (600, 1200):
        ts = np.linspace(0.0, 60.0, n + 1)
        k = SampledKernel(0.0, ts[1] - ts[0], tuple(0.1 * np.exp(-0.2 * ts)))
        errs.append(abs(kernel_norm(k) - exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_spectral_radius_scalar():
    assert spectral_radius([[0.5]]) == pytest.approx(0.5, abs=1e-12)


def test_spectral_radius_2d_printed_example():
    # Characteristic polynomial of [[0.5, 0.5], [1/3, 0.75]] solved by hand:
    # lambda = (tr + sqrt(tr^2 - 4 det)) / 2.
    tr = 0.5 + 0.75
    det = 0.5 * 0.75 - 0.5 * (1.0 / 3.0)
    expected = (tr + math.sqrt(tr * tr - 4 * det)) / 2
    assert expected == pytest.approx(1.0519, abs=1e-4)
    got = spectral_radius([[0.5, 0.5], [1.0 / 3.0, 0.75]])
    assert got == pytest.approx(expected, abs=1e-9)


def test_spectral_radius_circular():
    m = [[0.0, 0.5, 0.0], [0.0, 0.0, 0.5], [0.5, 0.0, 0.0]]
    # Eigenvalues are 0.5 times the cube roots of unity, all of modulus 0.5.
    assert spectral_radius(m) == pytest.approx(0.5, abs=1e-10)


@given(
    st.lists(st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=6),
)
@settings(max_examples=50)
def test_spectral_radius_diagonal(diag):
    got = spectral_radius(np.diag(diag))
    assert got == pytest.approx(max(diag), abs=1e-10)


def test_mean_rate_1d():
    m = HawkesModel(baselines=(0.05,), kernels=((ExponentialKernel(0.1, 0.2),),))
    assert mean_rate(m)[0] == pytest.approx(0.1, abs=1e-14)


@given(st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=1, max_size=5))
@settings(max_examples=30)
def test_mean_rate_zero_kernels_returns_mu(mu):
    d = len(mu)
    m = HawkesModel(
        baselines=tuple(mu),
        kernels=tuple(tuple(ZeroKernel() for _ in range(d)) for _ in range(d)),
    )
    assert np.allclose(mean_rate(m), mu, atol=0)


def test_mean_rate_2d_hand_solved():
    # Norm matrix of the 0.8-scaled 2D example: [[0.4, 0.4], [4/15, 0.6]].
    # Cramer's rule on (I - N) Lambda = mu with mu = (0.05, 0.1).
    n21 = 0.8 / 3.0
    det = 0.6 * 0.4 - 0.4 * n21
    lam1 = (0.4 * 0.05 + 0.4 * 0.1) / det
    lam2 = (0.6 * 0.1 + n21 * 0.05) / det
    m = HawkesModel(
        baselines=(0.05, 0.1),
        kernels=(
            (ExponentialKernel(0.08, 0.2), ExponentialKernel(0.08, 0.2)),
            (ExponentialKernel(0.24, 0.9), ExponentialKernel(0.24, 0.4)),
        ),
    )
    got = mean_rate(m)
    assert got[0] == pytest.approx(lam1, rel=1e-12)
    assert got[1] == pytest.approx(lam2, rel=1e-12)
    assert (lam1, lam2) == pytest.approx((0.45, 0.55), rel=1e-12)


def test_mean_rate_unstable_raises_with_rho():
    m = HawkesModel(
        baselines=(0.05, 0.1),
        kernels=(
            (ExponentialKernel(0.1, 0.2), ExponentialKernel(0.1, 0.2)),
            (ExponentialKernel(0.3, 0.9), ExponentialKernel(0.3, 0.4)),
        ),
    )
    with pytest.raises(StabilityError) as err:
        mean_rate(m)
    assert err.value.rho == pytest.approx(1.0520, abs=1e-3)


def test_norm_matrix_entries():
    m = HawkesModel(
        baselines=(0.0, 0.0),
        kernels=(
            (ZeroKernel(), ExponentialKernel(0.2, 0.4)),
            (PiecewiseLinearKernel(((0.0, 1.0), (1.0, 0.0))), ZeroKernel()),
        ),
    )
    nm = norm_matrix(m)
    assert np.allclose(nm.matrix, [[0.0, 0.5], [0.5, 0.0]])
    assert nm.rho == pytest.approx(0.5, abs=1e-10)


def test_negative_kernel_requires_rectified():
    neg = PiecewiseLinearKernel(((0.0, -0.1), (1.0, 0.2), (2.0, 0.0)))
    with pytest.raises(ConfigError):
        HawkesModel(baselines=(0.1,), kernels=((neg,),))
    m = HawkesModel(baselines=(0.1,), kernels=((neg,),), rectified=True)
    assert m.rectified


def test_mark_normalization_identity_exponential():
    # E[m] = 1 under Exp(1): identity already normalized.
    spec = MarkSpec(
        distribution=ExponentialMarks(1.0),
        influences=(IdentityMark(1.0), ConstantMark(1.0)),
    )
    assert spec.normalization_factors == (1.0, 1.0)
    # Exp(2): identity rescaled by the factor 2, recorded.
    spec2 = MarkSpec(distribution=ExponentialMarks(2.0), influences=(IdentityMark(1.0),))
    assert spec2.normalization_factors[0] == pytest.approx(2.0)
    assert spec2.influences[0].expect_under(ExponentialMarks(2.0)) == pytest.approx(1.0, abs=1e-12)


def test_mark_normalization_piecewise_under_empirical():
    dist = EmpiricalMarks(tuple(np.linspace(0.0, 4.0, 101)))
    f = PiecewiseConstantMark((0.0, 1.0, 2.0, 5.0), (0.5, 1.0, 3.0))
    spec = MarkSpec(distribution=dist, influences=(f,))
    e = spec.influences[0].expect_under(dist)
    assert e == pytest.approx(1.0, abs=1e-6)


def test_envelope_dominates_future():
    tri = PiecewiseLinearKernel(((1.0, 0.0), (1.5, 1.0), (2.0, 0.0)))
    taus = np.linspace(0.0, 2.5, 200)
    env = tri.envelope(taus)
    for k, tau in enumerate(taus):
        future = tri(np.linspace(tau, 2.5, 64))
        assert env[k] >= np.max(future) - 1e-12


def test_immutability():
    m = HawkesModel(baselines=(0.1,), kernels=((ExponentialKernel(0.1, 0.2),),))
    with pytest.raises(Exception):
        m.baselines = (0.2,)
