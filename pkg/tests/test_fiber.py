"""Momentum fibers: dispersion, edges, and the reduced operators."""

from __future__ import annotations

import numpy as np
import pytest

from semidirac import (
    Params,
    dense_eigs,
    dispersion,
    fiber_edge,
    fiber_operator,
    union_edge,
)

P1 = Params(1.0)


def test_dispersion_closed_form():
    lam_p, lam_m = dispersion(0.5, 0.3, P1)
    assert lam_p == pytest.approx(1.285496013218244, rel=1e-15)
    assert lam_m == -lam_p
    assert dispersion(0.0, 0.0, P1) == (1.0, -1.0)
    # branch magnitude is hypot(kappa, xi^2 + delta)
    assert dispersion(2.0, -1.5, P1)[0] == pytest.approx(np.hypot(1.5, 5.0))


def test_fiber_edge_quadratic_in_xi():
    assert fiber_edge(0.0, P1) == 1.0
    assert fiber_edge(-2.0, P1) == 5.0
    assert fiber_edge(3.0, Params(0.25)) == 9.25


def test_union_edge_is_exactly_delta():
    xs = np.linspace(-2.0, 2.0, 21)
    assert union_edge(xs, P1) == 1.0
    assert union_edge([0.0, 1.0], Params(0.3)) == 0.3
    with pytest.raises(ValueError, match="contain 0"):
        union_edge([0.5, 1.0], P1)
    with pytest.raises(ValueError, match="empty"):
        union_edge([], P1)


def test_fiber_operator_shape_and_hermiticity():
    for xi in (0.0, 0.7):
        op = fiber_operator(xi, P1, ny=60, y_max=30.0)
        assert op.dim == 2 * 60 - 1
        assert op.sym_defect == 0.0
    with pytest.raises(ValueError):
        fiber_operator(0.0, P1, ny=3, y_max=30.0)
    with pytest.raises(ValueError):
        fiber_operator(np.inf, P1, ny=60, y_max=30.0)


@pytest.mark.parametrize("xi", [0.0, 0.7, 1.0])
def test_fiber_spectrum_touches_analytic_edge(xi):
    # the constant-coupling fiber carries its edge eigenvalue exactly
    op = fiber_operator(xi, P1, ny=80, y_max=40.0)
    rep = dense_eigs(op)
    edge = fiber_edge(xi, P1)
    got = float(np.min(np.abs(rep.eigenvalues)))
    assert abs(got - edge) / edge < 1e-10


def test_fiber_spectrum_is_symmetric_up_to_the_boundary_mode():
    # the boundary state at +(xi^2 + delta) has no mirror partner; the
    # remaining spectrum pairs off exactly
    op = fiber_operator(0.4, P1, ny=80, y_max=40.0)
    lam = dense_eigs(op).eigenvalues
    edge = fiber_edge(0.4, P1)
    unpaired = int(np.argmin(np.abs(lam - edge)))
    assert abs(lam[unpaired] - edge) < 1e-10
    rest = np.delete(lam, unpaired)
    assert rest.size % 2 == 0
    assert np.max(np.abs(rest + rest[::-1])) < 1e-10 * np.max(np.abs(lam))


def test_gap_scales_with_delta():
    for delta in (0.5, 2.0):
        op = fiber_operator(0.0, Params(delta), ny=80, y_max=40.0)
        lam = dense_eigs(op).eigenvalues
        assert np.min(np.abs(lam)) == pytest.approx(delta, rel=1e-10)
        assert np.all(np.abs(lam) >= delta * (1.0 - 1e-10))
