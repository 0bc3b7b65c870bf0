"""Built-in smooth test families and convergence tables that compare the
closed-form leading terms against the quadrature reference.

The families are anisotropic with odd (cubic) content, so the first
subleading correction is nonzero and the quadrature/asymptotic ratio
approaches 1 at a visible 1/N rate.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .laplace import (
    AsymptoticValue,
    ScalarField,
    boundary_leading,
    boundary_second_order,
    corollary_mean_variance,
    expansion_input_from_fields,
    interior_leading,
    interior_second_order,
    quadrature_reference,
)

# Per-axis coefficients: curvature b, cubic skew c, quartic damping e. The
# skew obeys c^2 < 2 e b per axis, which keeps the origin the unique maximum
# on the closed box.
_B = (1.0, 1.5, 2.0)
_C = (0.18, 0.20, 0.22)
_E = (0.12, 0.12, 0.12)
_ZCROSS = 0.25  # z0*z1 quadratic coupling (n >= 2)
_A_X, _A_XX = 1.3, 0.1  # boundary decay, linear and quadratic
_XZ = 0.12  # x-z coupling in f, divided by n
_G1_X, _G1_XZ = 0.5, 0.15  # x content of the branch-1 weight
_G2_XX, _G2_XZ = 0.05, 0.15  # x content of the branch-2 weight
_G2_Z3 = 0.3  # cubic z content of the branch-2 weight


def _f_z_core(z: np.ndarray) -> np.ndarray:
    """z-part of the exponent on a batch of shape (P, n)."""
    v = np.zeros(len(z))
    for k in range(z.shape[1]):
        t = z[:, k]
        v += -0.5 * _B[k] * t * t + _C[k] * t**3 - _E[k] * t**4
    if z.shape[1] >= 2:
        v += _ZCROSS * z[:, 0] * z[:, 1]
    return v


def _f_z_grad(z: np.ndarray) -> np.ndarray:
    g = np.array([-_B[k] * t + 3 * _C[k] * t * t - 4 * _E[k] * t**3 for k, t in enumerate(z)])
    if len(z) >= 2:
        g[0] += _ZCROSS * z[1]
        g[1] += _ZCROSS * z[0]
    return g


def _f_z_hess(z: np.ndarray) -> np.ndarray:
    n = len(z)
    h = np.diag([-_B[k] + 6 * _C[k] * z[k] - 12 * _E[k] * z[k] ** 2 for k in range(n)])
    if n >= 2:
        h[0, 1] = h[1, 0] = _ZCROSS
    return h


def make_phase_field(case: str, n: int) -> ScalarField:
    """Exponent field f with its unique maximum (value 0) at the origin."""
    if case == "interior":
        core = lambda x, z: _f_z_core(z)
        return ScalarField(
            dim_z=n,
            dim_x=0,
            fn=lambda x, z: float(core(x, np.atleast_2d(z))[0]),
            fn_vec=core,
            grad_fn=lambda x, z: (0.0, _f_z_grad(z)),
            hess_z_fn=lambda x, z: _f_z_hess(z),
        )
    if case == "boundary":
        c = _XZ / max(n, 1)

        def core(x, z):
            return -_A_X * x - _A_XX * x * x + c * x * z.sum(axis=1) + _f_z_core(z)

        def grad(x, z):
            return (-_A_X - 2 * _A_XX * x + c * float(np.sum(z)), _f_z_grad(z) + c * x)

        return ScalarField(
            dim_z=n,
            dim_x=1,
            fn=lambda x, z: float(core(np.array([x]), np.atleast_2d(z))[0]),
            fn_vec=core,
            grad_fn=grad,
            hess_z_fn=lambda x, z: _f_z_hess(z),
        )
    raise ValueError(f"unknown case {case!r}")


def make_weight_field(case: str, branch: int, n: int) -> ScalarField:
    """Prefactor field g: branch 1 has g(0) = 1, branch 2 has g and its
    gradient vanishing at the origin."""
    boundary = case == "boundary"
    if case not in ("interior", "boundary"):
        raise ValueError(f"unknown case {case!r}")
    if branch == 1:
        def core(x, z):
            v = np.full(len(z), 1.0)
            for k in range(n):
                v += (0.4 + 0.05 * k) * z[:, k] + 0.25 * z[:, k] ** 2
            if n >= 2:
                v += 0.2 * z[:, 0] * z[:, 1]
            if boundary:
                v += _G1_X * x + _G1_XZ * x * z.sum(axis=1)
            return v

        def grad(x, z):
            gz = np.array([0.4 + 0.05 * k + 0.5 * t for k, t in enumerate(z)])
            if n >= 2:
                gz[0] += 0.2 * z[1]
                gz[1] += 0.2 * z[0]
            gx = 0.0
            if boundary:
                gz = gz + _G1_XZ * x
                gx = _G1_X + _G1_XZ * float(np.sum(z))
            return gx, gz

        def hess(x, z):
            h = 0.5 * np.eye(n)
            if n >= 2:
                h[0, 1] = h[1, 0] = 0.2
            return h

    elif branch == 2:
        def core(x, z):
            v = np.zeros(len(z))
            for k in range(n):
                v += (0.8 + 0.1 * k) * z[:, k] ** 2 + _G2_Z3 * z[:, k] ** 3
            if n >= 2:
                v += 0.3 * z[:, 0] * z[:, 1]
            if boundary:
                v += _G2_XX * x * x + _G2_XZ * x * z.sum(axis=1)
            return v

        def grad(x, z):
            gz = np.array([2 * (0.8 + 0.1 * k) * t + 3 * _G2_Z3 * t * t for k, t in enumerate(z)])
            if n >= 2:
                gz[0] += 0.3 * z[1]
                gz[1] += 0.3 * z[0]
            gx = 0.0
            if boundary:
                gz = gz + _G2_XZ * x
                gx = 2 * _G2_XX * x + _G2_XZ * float(np.sum(z))
            return gx, gz

        def hess(x, z):
            h = np.diag([2 * (0.8 + 0.1 * k) + 6 * _G2_Z3 * z[k] for k in range(n)])
            if n >= 2:
                h[0, 1] = h[1, 0] = 0.3
            return h

    else:
        raise ValueError(f"branch must be 1 or 2, got {branch}")

    if boundary:
        fn = lambda x, z: float(core(np.array([x]), np.atleast_2d(z))[0])
    else:
        fn = lambda x, z: float(core(x, np.atleast_2d(z))[0])
    return ScalarField(dim_z=n, dim_x=1 if boundary else 0, fn=fn, fn_vec=core,
                       grad_fn=grad, hess_z_fn=hess)


def leading_term(case: str, branch: int, m: Optional[int], n: int, N: float) -> AsymptoticValue:
    """Closed-form leading term for the built-in family."""
    f = make_phase_field(case, n)
    g = make_weight_field(case, branch, n)
    inp = expansion_input_from_fields(
        f, g, m if case == "boundary" else None, N, second_order=(branch == 2)
    )
    op = {
        ("interior", 1): interior_leading,
        ("interior", 2): interior_second_order,
        ("boundary", 1): boundary_leading,
        ("boundary", 2): boundary_second_order,
    }[(case, branch)]
    return op(inp)


def convergence_table(
    case: str,
    branch: int,
    m: Optional[int],
    n: int,
    n_values: Sequence[float],
    rel_tol: float = 1e-6,
) -> list[dict]:
    """Rows of {N, asymptotic, quadrature, ratio} for the built-in family.

    Both columns omit the common exp(N f(0)) factor (here f(0) = 0 anyway);
    ratio is quadrature/asymptotic and tends to 1 at rate 1/N.
    """
    f = make_phase_field(case, n)
    g = make_weight_field(case, branch, n)
    rows = []
    for N in n_values:
        asym = leading_term(case, branch, m, n, N)
        quad = quadrature_reference(f, g, m if case == "boundary" else None, N, rel_tol)
        a, q = asym.magnitude, quad.magnitude
        ratio = q / a if a != 0.0 else math.nan
        rows.append({"N": N, "asymptotic": a, "quadrature": q, "ratio": ratio})
    return rows


def corollary_table(
    case: str,
    m: Optional[int],
    n: int,
    n_values: Sequence[float],
    rel_tol: float = 1e-6,
) -> list[dict]:
    """Normalized variance of the branch-1 weight field: closed-form leading
    value against full quadrature, as {N, asymptotic, quadrature, ratio} rows."""
    f = make_phase_field(case, n)
    g = make_weight_field(case, 1, n)
    mm = m if case == "boundary" else None
    one = ScalarField(dim_z=n, dim_x=f.dim_x, fn=lambda x, z: 1.0,
                      fn_vec=lambda x, z: np.ones(len(z)))
    rows = []
    for N in n_values:
        _, v_asym = corollary_mean_variance(f, g, mm, N)
        z_norm = quadrature_reference(f, one, mm, N, rel_tol).magnitude
        mean_q = quadrature_reference(f, g, mm, N, rel_tol).magnitude / z_norm
        dev2 = ScalarField(
            dim_z=n, dim_x=f.dim_x,
            fn=lambda x, z, _c=mean_q: (g.fn(x, z) - _c) ** 2,
            fn_vec=lambda x, z, _c=mean_q: (g.fn_vec(x, z) - _c) ** 2,
        )
        v_quad = quadrature_reference(f, dev2, mm, N, rel_tol).magnitude / z_norm
        ratio = v_quad / v_asym if v_asym != 0.0 else math.nan
        rows.append({"N": N, "asymptotic": v_asym, "quadrature": v_quad, "ratio": ratio})
    return rows
