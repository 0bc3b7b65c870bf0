import math

import numpy as np
import pytest

from tomobayes.bayes import (
    bayes_report,
    build_tangent_basis,
    fisher_apply,
    fisher_matrix,
    fisher_solve,
    kernel_face_dim,
    tangent_dim,
    tangent_project,
)
from tomobayes.hermitian import DensityMatrix, HermitianMatrix, frobenius_inner
from tomobayes.laplace import ScalarField, corollary_mean_variance
from tomobayes.likelihood import hessian_form, log_likelihood
from tomobayes.maxlike import SolverOptions, certify, solve

from helpers import (
    I2,
    SZ,
    pauli_dataset,
    random_hermitian,
    rank_one_qubit_dataset,
    symmetric_qubit_dataset,
    tangent_fd_hessian,
)
from test_maxlike import degenerate_gap_dataset, qutrit_pure_mub_dataset

TIGHT = SolverOptions(grad_tol=1e-11, max_iters=40000)


def projector(matrix) -> HermitianMatrix:
    return HermitianMatrix(matrix)


class TestTangentProject:
    def test_full_rank_reduces_to_traceless_part(self, rng):
        p = projector(np.eye(3))
        for _ in range(5):
            a = HermitianMatrix(random_hermitian(3, rng))
            out = tangent_project(a, p)
            expected = a.matrix - np.trace(a.matrix) * np.eye(3) / 3
            assert np.abs(out.matrix - expected).max() <= 1e-12

    def test_projector_itself_maps_to_zero(self):
        p = projector(np.diag([0.0, 1.0, 1.0]))
        out = tangent_project(HermitianMatrix(p.matrix), p)
        assert np.abs(out.matrix).max() <= 1e-12

    def test_kernel_block_maps_to_zero(self, rng):
        p_m = np.diag([0.0, 0.0, 1.0])
        comp = np.eye(3) - p_m
        b = random_hermitian(3, rng)
        a = HermitianMatrix(comp @ b @ comp)
        out = tangent_project(a, projector(p_m))
        assert np.abs(out.matrix).max() <= 1e-12

    def test_idempotent_and_constraints(self, rng):
        p = projector(np.diag([0.0, 1.0, 1.0]))
        comp = np.eye(3) - p.matrix
        for _ in range(10):
            a = HermitianMatrix(random_hermitian(3, rng))
            out = tangent_project(a, p)
            again = tangent_project(out, p)
            assert np.abs(out.matrix - again.matrix).max() <= 1e-10
            assert abs(np.trace(out.matrix @ p.matrix).real) <= 1e-10
            assert np.abs(comp @ out.matrix @ comp).max() <= 1e-10

    def test_self_adjoint(self, rng):
        p = projector(np.diag([0.0, 1.0, 1.0]))
        for _ in range(10):
            a = HermitianMatrix(random_hermitian(3, rng))
            b = HermitianMatrix(random_hermitian(3, rng))
            lhs = frobenius_inner(b, tangent_project(a, p))
            rhs = frobenius_inner(tangent_project(b, p), a)
            assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_zero_projector_rejected(self):
        with pytest.raises(ValueError):
            tangent_project(HermitianMatrix(I2), projector(np.zeros((2, 2))))


class TestTangentBasis:
    @pytest.mark.parametrize("d,r,expected", [(2, 1, 2), (2, 2, 3), (3, 1, 4)])
    def test_dimension_examples(self, d, r, expected):
        assert tangent_dim(d, r) == expected

    def test_orthonormal_and_tangent(self):
        ds = rank_one_qubit_dataset()
        rho, cert, _ = solve(ds, TIGHT)
        basis = build_tangent_basis(rho, cert.projector)
        assert basis.dimension == tangent_dim(2, cert.rank)
        for i, e in enumerate(basis.elements):
            proj_e = tangent_project(e, cert.projector)
            assert np.abs(proj_e.matrix - e.matrix).max() <= 1e-10
            for j, f in enumerate(basis.elements):
                expected = 1.0 if i == j else 0.0
                assert frobenius_inner(e, f) == pytest.approx(expected, abs=1e-10)

    def test_counts_across_shapes(self, rng):
        for d in range(2, 5):
            for r in range(1, d + 1):
                u, _ = np.linalg.qr(rng.standard_normal((d, d))
                                    + 1j * rng.standard_normal((d, d)))
                vals = np.zeros(d)
                vals[d - r:] = np.sort(rng.uniform(0.1, 1.0, r))
                vals /= vals.sum()
                rho = DensityMatrix((u * vals) @ u.conj().T)
                pm = u[:, d - r:] @ u[:, d - r:].conj().T
                basis = build_tangent_basis(rho, projector(pm))
                assert basis.dimension == tangent_dim(d, r)

    def test_projector_mismatch_rejected(self):
        rho = DensityMatrix(np.diag([0.0, 0.3, 0.7]))
        wrong = projector(np.diag([1.0, 1.0, 0.0]))
        with pytest.raises(ValueError):
            build_tangent_basis(rho, wrong)


class TestFisherOperator:
    def test_full_rank_correction_vanishes(self):
        ds = symmetric_qubit_dataset()
        rho, cert, _ = solve(ds, TIGHT)
        x = HermitianMatrix(SZ)
        out = fisher_apply(ds, rho, cert, x)
        # interior stationarity: gradient = lambda_bar I, so only the
        # likelihood term survives
        from tomobayes.bayes import _FisherContext
        ctx = _FisherContext(ds, rho, cert)
        t = np.einsum("mij,ji->m", ctx.y_par, x.matrix).real
        first_term = np.einsum("m,mij->ij", ctx.coef * t, ctx.y_par)
        assert np.abs(out.matrix - first_term).max() <= 1e-9

    def test_positive_on_tangent_directions(self, rng):
        ds = rank_one_qubit_dataset()
        rho, cert, _ = solve(ds, TIGHT)
        for _ in range(10):
            raw = HermitianMatrix(random_hermitian(2, rng))
            x = tangent_project(raw, cert.projector)
            if np.abs(x.matrix).max() < 1e-12:
                continue
            assert frobenius_inner(x, fisher_apply(ds, rho, cert, x)) > 0

    def test_requires_passing_certificate(self):
        ds = rank_one_qubit_dataset()
        bad_cert = certify(ds, DensityMatrix(I2 / 2), tol=1e-8)
        assert not bad_cert.passed
        with pytest.raises(ValueError):
            fisher_apply(ds, DensityMatrix(I2 / 2), bad_cert, HermitianMatrix(SZ))

    @pytest.mark.parametrize("make_ds,label", [
        (lambda: pauli_dataset([105, 95, 98, 102, 100, 100]), "full-rank qubit"),
        (rank_one_qubit_dataset, "rank-one qubit"),
        (qutrit_pure_mub_dataset, "rank-one qutrit"),
    ])
    def test_matches_fd_hessian_of_restricted_likelihood(self, make_ds, label):
        ds = make_ds()
        rho, cert, _ = solve(ds, TIGHT)
        assert cert.passed, label
        basis = build_tangent_basis(rho, cert.projector)
        assembled = fisher_matrix(ds, rho, cert, basis)
        fd = tangent_fd_hessian(ds, rho, basis)
        scale = np.abs(assembled).max()
        assert np.abs(assembled + fd).max() <= 1e-4 * scale
        # symmetric positive definite as claimed
        assert np.abs(assembled - assembled.T).max() <= 1e-9 * scale
        assert np.linalg.eigvalsh(assembled)[0] > 0


class TestFisherSolve:
    def test_round_trip(self):
        ds = rank_one_qubit_dataset()
        rho, cert, _ = solve(ds, TIGHT)
        a_par = tangent_project(HermitianMatrix(SZ), cert.projector)
        x = fisher_solve(ds, rho, cert, a_par)
        back = fisher_apply(ds, rho, cert, x)
        assert np.abs(back.matrix - a_par.matrix).max() <= 1e-8

    def test_result_already_tangent(self):
        ds = rank_one_qubit_dataset()
        rho, cert, _ = solve(ds, TIGHT)
        a_par = tangent_project(HermitianMatrix(SZ), cert.projector)
        x = fisher_solve(ds, rho, cert, a_par)
        assert np.abs(tangent_project(x, cert.projector).matrix - x.matrix).max() <= 1e-10

    def test_non_spanning_effects_rejected(self):
        # z-axis only: curvature vanishes along x and y directions
        ds = pauli_dataset([120, 80, 0, 0, 0, 0])
        rho, cert, _ = solve(ds)
        assert cert.passed
        a_par = tangent_project(HermitianMatrix(SZ), cert.projector)
        with pytest.raises(ValueError):
            fisher_solve(ds, rho, cert, a_par)


class TestBayesReport:
    def test_identity_observable_has_zero_variance(self):
        ds = symmetric_qubit_dataset()
        rho, cert, _ = solve(ds, TIGHT)
        report = bayes_report(ds, HermitianMatrix(I2), rho, cert)
        assert report.mean == pytest.approx(1.0, abs=1e-12)
        assert report.variance == pytest.approx(0.0, abs=1e-15)

    def test_variance_invariant_under_identity_shift(self):
        ds = pauli_dataset([105, 95, 98, 102, 100, 100])
        rho, cert, _ = solve(ds, TIGHT)
        v1 = bayes_report(ds, HermitianMatrix(SZ), rho, cert).variance
        v2 = bayes_report(ds, HermitianMatrix(SZ + 3.7 * I2), rho, cert).variance
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_dimension_bookkeeping(self):
        ds = qutrit_pure_mub_dataset()
        rho, cert, _ = solve(ds, TIGHT)
        coupling = np.zeros((3, 3), complex)
        coupling[0, 1] = coupling[1, 0] = 1.0  # couples range and kernel
        report = bayes_report(ds, HermitianMatrix(coupling), rho, cert)
        assert report.rank == 1
        assert report.kernel_face_dim == kernel_face_dim(3, 1) == 3
        assert report.tangent_dim == tangent_dim(3, 1) == 4
        assert report.valid
        assert report.variance > 0

    def test_degenerate_gap_flagged(self):
        ds = degenerate_gap_dataset(gap=1e-8)
        rho = DensityMatrix(np.diag([1.0, 0.0]))
        cert = certify(ds, rho)
        assert cert.passed
        report = bayes_report(ds, HermitianMatrix(SZ), rho, cert, force=True)
        assert not report.valid
        assert "degenerate_gap" in report.flags

    def test_failed_certificate_needs_force(self):
        ds = rank_one_qubit_dataset()
        cert = certify(ds, DensityMatrix(I2 / 2), tol=1e-8)
        with pytest.raises(ValueError):
            bayes_report(ds, HermitianMatrix(SZ), DensityMatrix(I2 / 2), cert)
        report = bayes_report(ds, HermitianMatrix(SZ), DensityMatrix(I2 / 2), cert,
                              force=True)
        assert "certificate_failed" in report.flags

    def test_json_payload(self):
        ds = symmetric_qubit_dataset()
        rho, cert, _ = solve(ds, TIGHT)
        obj = bayes_report(ds, HermitianMatrix(SZ), rho, cert).to_json_obj()
        assert obj["gap"] is None  # full rank: infinite gap sentinel
        assert obj["valid"] is True
        assert set(obj) == {
            "rho_ml", "rank", "kernel_face_dim", "tangent_dim", "mean",
            "variance", "lambda_bar", "gap", "valid", "flags",
        }


class TestFullRankConsistency:
    def test_variance_matches_interior_corollary(self):
        """The curvature-solve variance must agree with the leading normalized
        variance computed from local derivative data in tangent coordinates."""
        ds = pauli_dataset([105, 95, 98, 102, 100, 100])
        rho, cert, _ = solve(ds, TIGHT)
        obs = HermitianMatrix(SZ)
        report = bayes_report(ds, obs, rho, cert)

        basis = build_tangent_basis(rho, cert.projector)
        scale = 0.02  # keeps the sampled box inside positive probabilities
        form = hessian_form(ds, rho)
        hess = scale**2 * np.array(
            [[form(a, b) for b in basis.elements] for a in basis.elements]
        )
        v = scale * np.array([frobenius_inner(e, obs) for e in basis.elements])
        mats = np.stack([e.matrix for e in basis.elements])

        def f_fn(x, z):
            state = DensityMatrix(rho.matrix + scale * np.tensordot(z, mats, axes=1))
            return log_likelihood(ds, state)

        def g_fn(x, z):
            shifted = rho.matrix + scale * np.tensordot(z, mats, axes=1)
            return float(np.trace(shifted @ obs.matrix).real)

        f_field = ScalarField(dim_z=basis.dimension, fn=f_fn,
                              hess_z_fn=lambda x, z: hess)
        g_field = ScalarField(dim_z=basis.dimension, fn=g_fn,
                              grad_fn=lambda x, z: (0.0, v))
        mean, variance = corollary_mean_variance(f_field, g_field, None, ds.total_shots)
        assert mean == pytest.approx(report.mean, abs=1e-12)
        assert variance == pytest.approx(report.variance, rel=1e-8)
