"""Asymptotic Bayesian mean and variance of observables at a certified
maximum-likelihood state: tangent-space projection, the Fisher-type curvature
super-operator on the fixed-rank unit-trace manifold, and its tangent-space
inversion.

The curvature operator is, up to sign, the Hessian of the log-likelihood
restricted to that manifold; the variance of observable A is
tr(A_par F^-1(A_par)) / total_shots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .hermitian import (
    DensityMatrix,
    HermitianMatrix,
    frobenius_inner,
    pseudo_inverse,
    to_json_array,
)
from .likelihood import MeasurementDataset, gradient
from .maxlike import OptimalityCertificate, spectral_gap

_CONDITION_CAP = 1e12


def kernel_face_dim(d: int, r: int) -> int:
    """Dimension (d-r+1)(d-r-1) of the face of rank <= d-r density matrices;
    it enters the exponent bookkeeping of the error-bar expansion."""
    return (d - r + 1) * (d - r - 1)


def tangent_dim(d: int, r: int) -> int:
    """Dimension 2r(d-r) + (r+1)(r-1) of the tangent space to the rank-r
    unit-trace manifold."""
    return 2 * r * (d - r) + (r + 1) * (r - 1)


def tangent_project(a: HermitianMatrix, projector: HermitianMatrix) -> HermitianMatrix:
    """Frobenius-orthogonal projection onto the tangent space at a rank-r
    state with range projector P:

        A_par = A - (tr(A P) / tr(P)) P - (I - P) A (I - P)

    For a full-rank state (P = I) this reduces to A - tr(A) I / d.
    """
    pm = projector.matrix
    tr_p = float(np.trace(pm).real)
    if tr_p < 0.5:
        raise ValueError("projector has zero trace; tangent space undefined")
    am = a.matrix
    comp = np.eye(a.dim) - pm
    out = am - (float(np.trace(am @ pm).real) / tr_p) * pm - comp @ am @ comp
    return HermitianMatrix(out)


@dataclass(frozen=True)
class TangentBasis:
    """Frobenius-orthonormal Hermitian basis of the tangent space at a
    rank-r state: block-off-diagonal pairs coupling range and kernel, plus
    traceless directions inside the range block."""

    rank: int
    elements: tuple[HermitianMatrix, ...]

    @property
    def dimension(self) -> int:
        return len(self.elements)


def build_tangent_basis(rho: DensityMatrix, projector: HermitianMatrix) -> TangentBasis:
    """Orthonormal tangent basis at rho, built in its eigenbasis and rotated
    back. The projector must match the top-r eigenspace of rho."""
    d = rho.dim
    r = int(round(float(np.trace(projector.matrix).real)))
    if r <= 0:
        raise ValueError("rank of the projector is zero")
    spec = rho.spectral()
    u = spec.unitary  # ascending eigenvalues: kernel first, range last
    range_vecs = u[:, d - r:]
    if np.linalg.norm(range_vecs @ range_vecs.conj().T - projector.matrix) > 1e-6:
        raise ValueError("projector does not match the state's top eigenspace")

    elements = []

    def add(block: np.ndarray) -> None:
        elements.append(HermitianMatrix(u @ block @ u.conj().T))

    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    kernel_idx = range(d - r)
    range_idx = range(d - r, d)
    for k in kernel_idx:
        for j in range_idx:
            e = np.zeros((d, d), dtype=complex)
            e[k, j] = e[j, k] = inv_sqrt2
            add(e)
            e = np.zeros((d, d), dtype=complex)
            e[k, j] = 1j * inv_sqrt2
            e[j, k] = -1j * inv_sqrt2
            add(e)
    for a in range_idx:
        for b in range_idx:
            if a < b:
                e = np.zeros((d, d), dtype=complex)
                e[a, b] = e[b, a] = inv_sqrt2
                add(e)
                e = np.zeros((d, d), dtype=complex)
                e[a, b] = 1j * inv_sqrt2
                e[b, a] = -1j * inv_sqrt2
                add(e)
    for t in range(1, r):
        e = np.zeros((d, d), dtype=complex)
        for j in range(t):
            e[d - r + j, d - r + j] = 1.0
        e[d - r + t, d - r + t] = -t
        add(e * (1.0 / math.sqrt(t * (t + 1))))

    assert len(elements) == tangent_dim(d, r)
    return TangentBasis(rank=r, elements=tuple(elements))


class _FisherContext:
    """Precomputed pieces of the curvature operator at a fixed state."""

    def __init__(self, ds: MeasurementDataset, rho: DensityMatrix,
                 cert: OptimalityCertificate):
        p = ds.probabilities(rho)
        seen = ds.weights > 0
        if np.any(p[seen] <= 0.0):
            raise ValueError("curvature undefined: an observed outcome has zero probability")
        self.coef = np.where(seen, ds.weights / np.where(seen, p, 1.0) ** 2, 0.0)
        proj = cert.projector
        self.y_par = np.ascontiguousarray(
            [tangent_project(e.hermitian, proj).matrix for e in ds.effects]
        )
        grad_m = gradient(ds, rho).matrix
        self.correction = cert.lambda_bar * np.eye(rho.dim) - grad_m
        self.pinv = pseudo_inverse(rho).matrix
        self.grad = grad_m

    def apply(self, x: np.ndarray) -> np.ndarray:
        t = np.einsum("mij,ji->m", self.y_par, x).real
        out = np.einsum("m,mij->ij", self.coef * t, self.y_par)
        out = out + self.correction @ x @ self.pinv + self.pinv @ x @ self.correction
        return (out + out.conj().T) / 2.0


def fisher_apply(
    ds: MeasurementDataset,
    rho: DensityMatrix,
    cert: OptimalityCertificate,
    x: HermitianMatrix,
) -> HermitianMatrix:
    """Curvature super-operator at a certified maximizer:

        F(X) = sum_m w_m tr(X Y_m_par) Y_m_par / tr(rho Y_m)^2
             + (lambda_bar I - grad f) X rho^+ + rho^+ X (lambda_bar I - grad f)

    with rho^+ the pseudo-inverse. Requires a passing certificate.
    """
    if not cert.passed:
        raise ValueError("certificate did not pass; curvature data is unreliable")
    return HermitianMatrix(_FisherContext(ds, rho, cert).apply(x.matrix))


def fisher_matrix(
    ds: MeasurementDataset,
    rho: DensityMatrix,
    cert: OptimalityCertificate,
    basis: TangentBasis,
) -> np.ndarray:
    """The curvature operator assembled in a tangent basis, as a real
    symmetric matrix M[a, b] = tr(E_a F(E_b))."""
    ctx = _FisherContext(ds, rho, cert)
    mats = [e.matrix for e in basis.elements]
    n = len(mats)
    out = np.empty((n, n))
    for b in range(n):
        fb = ctx.apply(mats[b])
        for a in range(n):
            out[a, b] = float(np.trace(mats[a] @ fb).real)
    return (out + out.T) / 2.0


def fisher_solve(
    ds: MeasurementDataset,
    rho: DensityMatrix,
    cert: OptimalityCertificate,
    a_par: HermitianMatrix,
) -> HermitianMatrix:
    """Tangent-space inverse of the curvature operator at a_par.

    Assembles the operator in an orthonormal tangent basis and solves by
    Cholesky. Raises ValueError when the assembled matrix is not positive
    definite, which signals a violated spanning or gap hypothesis.
    """
    if not cert.passed:
        raise ValueError("certificate did not pass; curvature data is unreliable")
    return _fisher_solve_unchecked(ds, rho, cert, a_par)


def _fisher_solve_unchecked(ds, rho, cert, a_par) -> HermitianMatrix:
    basis = build_tangent_basis(rho, cert.projector)
    m = fisher_matrix(ds, rho, cert, basis)
    v = np.array([frobenius_inner(e, a_par) for e in basis.elements])
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "assembled curvature matrix is not positive definite; the effects "
            "may not span the Hermitian space or the spectral gap is degenerate"
        ) from exc
    coeffs = np.linalg.solve(chol.conj().T, np.linalg.solve(chol, v))
    out = np.zeros((rho.dim, rho.dim), dtype=complex)
    for c, e in zip(coeffs, basis.elements):
        out += c * e.matrix
    return HermitianMatrix(out)


@dataclass(frozen=True)
class AsymptoticReport:
    """Sharp-peak estimate of an observable's Bayesian mean and variance.

    kernel_face_dim and tangent_dim are the dimension bookkeeping of the
    expansion exponents for (dim, rank); gap is +inf at a full-rank state.
    variance is None only for forced reports whose curvature solve failed.
    """

    rho_ml: DensityMatrix
    rank: int
    kernel_face_dim: int
    tangent_dim: int
    mean: float
    variance: Optional[float]
    lambda_bar: float
    gap: float
    valid: bool
    flags: tuple[str, ...]

    def to_json_obj(self) -> dict:
        return {
            "rho_ml": to_json_array(self.rho_ml),
            "rank": self.rank,
            "kernel_face_dim": self.kernel_face_dim,
            "tangent_dim": self.tangent_dim,
            "mean": self.mean,
            "variance": self.variance,
            "lambda_bar": self.lambda_bar,
            "gap": None if math.isinf(self.gap) else self.gap,
            "valid": self.valid,
            "flags": list(self.flags),
        }


def bayes_report(
    ds: MeasurementDataset,
    observable: HermitianMatrix,
    rho: DensityMatrix,
    cert: OptimalityCertificate,
    gap_tol: float = 1e-6,
    force: bool = False,
) -> AsymptoticReport:
    """Mean tr(A rho) and variance tr(A_par F^-1(A_par)) / total_shots.

    The report is flagged invalid when the certificate failed (only reachable
    with force=True), the spectral gap is below gap_tol, or the retained
    spectrum of rho is so ill-conditioned that the pseudo-inverse amplifies
    noise (condition number above 1e12).
    """
    flags: list[str] = []
    if not cert.passed:
        if not force:
            raise ValueError("certificate did not pass; use force to report anyway")
        flags.append("certificate_failed")
    grad = gradient(ds, rho)
    gap = spectral_gap(cert, grad)
    if gap <= gap_tol:
        flags.append("degenerate_gap")
    eigs = rho.spectral().eigenvalues
    if cert.min_retained_eigenvalue > 0 and (
        float(eigs[-1]) / cert.min_retained_eigenvalue > _CONDITION_CAP
    ):
        flags.append("ill_conditioned_range")

    a_par = tangent_project(observable, cert.projector)
    variance: Optional[float] = None
    try:
        x = _fisher_solve_unchecked(ds, rho, cert, a_par)
        variance = frobenius_inner(a_par, x) / ds.total_shots
    except ValueError:
        if not force:
            raise
        flags.append("curvature_not_positive_definite")

    d = rho.dim
    return AsymptoticReport(
        rho_ml=rho,
        rank=cert.rank,
        kernel_face_dim=kernel_face_dim(d, cert.rank),
        tangent_dim=tangent_dim(d, cert.rank),
        mean=frobenius_inner(observable, rho.base),
        variance=variance,
        lambda_bar=cert.lambda_bar,
        gap=gap,
        valid=not flags,
        flags=tuple(flags),
    )
