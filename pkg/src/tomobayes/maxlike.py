"""Concave maximization of the log-likelihood over density matrices and
certification of the stationarity conditions, including rank-deficient
maximizers on the boundary.

The solver is projected gradient ascent with a Barzilai-Borwein step and
monotone backtracking; the certificate is computed independently of the
solver path, so optimality is always checked, never assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .hermitian import (
    DensityMatrix,
    HermitianMatrix,
    numerical_rank,
    project_to_density,
    to_json_array,
)
from .likelihood import MeasurementDataset, gradient, log_likelihood

_BB_STEP_RANGE = (1e-8, 1e8)
_MIN_BACKTRACK_STEP = 1e-14
_STALL_ITERS = 300  # stop when the best residual has not improved this long


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    grad_tol: float = 1e-9  # on certificate residuals
    step_init: float = 1.0
    rank_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.max_iters <= 0:
            raise ValueError("max_iters must be positive")
        for name in ("grad_tol", "step_init", "rank_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class OptimalityCertificate:
    """Stationarity data at a candidate maximizer.

    A maximizer must commute with the likelihood gradient, the gradient must
    act as lambda_bar on the range of the state (projector), and lambda_bar I
    minus the gradient must be positive semidefinite. With normalized weights
    lambda_bar = tr(rho grad f) = 1 identically.

    min_probability is taken over effects with positive weight: outcomes that
    were never observed do not constrain positivity.
    """

    lambda_bar: float
    projector: HermitianMatrix
    commutator_residual: float
    eigen_equation_residual: float
    psd_slack: float
    min_probability: float
    rank: int
    min_retained_eigenvalue: float
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.commutator_residual <= self.tol
            and self.eigen_equation_residual <= self.tol
            and self.psd_slack >= -self.tol
            and self.min_probability > 0
        )

    @property
    def max_residual(self) -> float:
        return max(
            self.commutator_residual,
            self.eigen_equation_residual,
            max(0.0, -self.psd_slack),
        )

    def to_json_obj(self) -> dict:
        return {
            "lambda_bar": self.lambda_bar,
            "projector": to_json_array(self.projector),
            "commutator_residual": self.commutator_residual,
            "eigen_equation_residual": self.eigen_equation_residual,
            "psd_slack": self.psd_slack,
            "min_probability": self.min_probability,
            "rank": self.rank,
            "min_retained_eigenvalue": self.min_retained_eigenvalue,
            "tol": self.tol,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    log_likelihood: float
    step: float
    grad_residual: float

    def to_json_obj(self) -> dict:
        return {
            "iter": self.iteration,
            "f": self.log_likelihood,
            "step": self.step,
            "grad_residual": self.grad_residual,
        }


def certify(
    ds: MeasurementDataset,
    rho: DensityMatrix,
    rank_tol: float = 1e-7,
    tol: float = 1e-8,
) -> OptimalityCertificate:
    """Evaluate the stationarity conditions at rho.

    lambda_bar is extracted as tr(rho grad f), which equals 1 exactly (up to
    roundoff) for normalized weights; the projector comes from the numerical
    rank of rho at rank_tol.
    """
    p = ds.probabilities(rho)
    seen = ds.weights > 0
    if np.any(p[seen] <= 0.0):
        raise ValueError("likelihood is -inf at rho; nothing to certify")
    grad = gradient(ds, rho).matrix
    rho_m = rho.matrix
    lam = float(np.trace(rho_m @ grad).real)
    rank, proj = numerical_rank(rho, rank_tol)
    pm = proj.matrix
    comm = float(np.linalg.norm(rho_m @ grad - grad @ rho_m))
    eig_eq = float(np.linalg.norm(lam * pm - pm @ grad))
    slack_eigs = np.linalg.eigvalsh(lam * np.eye(rho.dim) - grad)
    eigs = rho.spectral().eigenvalues
    retained = eigs[eigs > rank_tol]
    return OptimalityCertificate(
        lambda_bar=lam,
        projector=proj,
        commutator_residual=comm,
        eigen_equation_residual=eig_eq,
        psd_slack=float(slack_eigs[0]),
        min_probability=float(p[seen].min()) if np.any(seen) else math.inf,
        rank=rank,
        min_retained_eigenvalue=float(retained.min()) if retained.size else 0.0,
        tol=tol,
    )


def spectral_gap(cert: OptimalityCertificate, grad: HermitianMatrix) -> float:
    """lambda_bar minus the largest eigenvalue of the gradient compressed to
    the kernel of the state.

    A positive gap validates the curvature hypothesis behind the variance
    formula; a tiny gap flags the degenerate case. Full rank has no kernel
    block and returns +inf.
    """
    d = grad.dim
    if cert.rank >= d:
        return math.inf
    w, u = np.linalg.eigh(cert.projector.matrix)
    kernel = u[:, w < 0.5]
    block = kernel.conj().T @ grad.matrix @ kernel
    top = float(np.linalg.eigvalsh(block)[-1])
    return cert.lambda_bar - top


def solve(
    ds: MeasurementDataset,
    opts: SolverOptions = SolverOptions(),
    initial: Optional[DensityMatrix] = None,
) -> tuple[DensityMatrix, OptimalityCertificate, list[IterationRecord]]:
    """Maximize the log-likelihood over density matrices.

    Projected gradient ascent from the maximally mixed state (or `initial`),
    with a Barzilai-Borwein step safeguarded by halving until the likelihood
    does not decrease beyond a 1e-13 slack (near the optimum likelihood
    differences drop below double resolution while the certificate residual
    still contracts). Stops as soon as the independently computed certificate
    passes at opts.grad_tol, or when the residual stops improving. On failure
    the best-residual iterate is returned with its failing certificate
    (check .passed).

    Returns:
        (estimate, certificate, iteration log)
    """
    d = ds.dim
    rho = initial if initial is not None else DensityMatrix(np.eye(d) / d)
    f_cur = log_likelihood(ds, rho)
    if not math.isfinite(f_cur):
        raise ValueError("likelihood is -inf at the starting state")

    trace: list[IterationRecord] = []
    step = opts.step_init
    prev_rho_m: Optional[np.ndarray] = None
    prev_dir: Optional[np.ndarray] = None
    cert = certify(ds, rho, opts.rank_tol, opts.grad_tol)
    best = (cert.max_residual, rho, cert)
    best_iter = 0

    for it in range(opts.max_iters):
        grad_m = gradient(ds, rho).matrix
        trace.append(IterationRecord(it, f_cur, step, cert.max_residual))
        if cert.passed:
            break
        if it - best_iter > _STALL_ITERS:
            break  # residual floor reached

        # Ascent direction with the constraint-normal (identity) component
        # removed: stepping along the raw gradient is absorbed by the
        # projection near the optimum, since grad ~ lambda_bar I there.
        dir_m = grad_m - (float(np.trace(rho.matrix @ grad_m).real)) * np.eye(d)

        if prev_rho_m is not None:
            s = rho.matrix - prev_rho_m
            y = dir_m - prev_dir
            sy = -float(np.vdot(s, y).real)  # >= 0 by concavity
            ss = float(np.vdot(s, s).real)
            if sy > 1e-300 and ss > 0:
                step = min(max(ss / sy, _BB_STEP_RANGE[0]), _BB_STEP_RANGE[1])

        slack = 1e-13 * max(1.0, abs(f_cur))
        cand, f_new, t = None, f_cur, step
        while t >= _MIN_BACKTRACK_STEP:
            trial = project_to_density(HermitianMatrix(rho.matrix + t * dir_m))
            f_trial = log_likelihood(ds, trial)
            if f_trial >= f_cur - slack:
                cand, f_new = trial, f_trial
                break
            t /= 2.0
        if cand is None:
            break  # no acceptable step at any size; numerical stationarity

        prev_rho_m, prev_dir = rho.matrix, dir_m
        rho, f_cur, step = cand, f_new, t
        cert = certify(ds, rho, opts.rank_tol, opts.grad_tol)
        if cert.max_residual < best[0]:
            best = (cert.max_residual, rho, cert)
            best_iter = it

    if cert.passed:
        return rho, cert, trace
    _, rho_b, cert_b = best
    return rho_b, cert_b, trace
