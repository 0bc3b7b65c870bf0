"""Shared constructions for the test suite: Pauli bases, canned datasets,
random ensembles, and independent oracles (grid searches, finite-difference
curvature along manifold curves)."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from tomobayes.bayes import TangentBasis
from tomobayes.hermitian import DensityMatrix
from tomobayes.likelihood import MeasurementDataset, PovmEffect

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SX, SY, SZ)


def six_pauli_effects() -> list[PovmEffect]:
    """(I +/- sigma_k)/2 for the three Pauli axes: three settings of two."""
    return [PovmEffect((I2 + s * sign) / 2) for s in (SZ, SX, SY) for sign in (+1, -1)]


def pauli_dataset(counts) -> MeasurementDataset:
    """Dataset over the six Pauli effects, ordered z+, z-, x+, x-, y+, y-."""
    return MeasurementDataset.from_counts(six_pauli_effects(), counts)


def symmetric_qubit_dataset(shots_per_effect: int = 100) -> MeasurementDataset:
    return pauli_dataset([shots_per_effect] * 6)


def rank_one_qubit_dataset(shots: int = 600) -> MeasurementDataset:
    """All z-shots land on z+; x and y balanced. The maximizer is |0><0|."""
    third = shots // 3
    half = third // 2
    return pauli_dataset([third, 0, half, half, half, half])


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (g + g.conj().T) / 2


def random_density(d: int, rng: np.random.Generator) -> DensityMatrix:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_effect(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random effect with eigenvalues in (0.05, 0.95), so I - E is one too."""
    u = random_unitary(d, rng)
    vals = rng.uniform(0.05, 0.95, d)
    return (u * vals) @ u.conj().T


def random_two_outcome_dataset(
    d: int, rng: np.random.Generator, settings: int | None = None, shots: int = 3000
) -> MeasurementDataset:
    """Random two-outcome settings {E, I-E} with multinomial counts drawn
    from a random flat-measure true state."""
    n_set = settings if settings is not None else (4 if d == 2 else 6)
    effects: list[PovmEffect] = []
    counts: list[int] = []
    rho_true = random_density(d, rng).matrix
    per_setting = shots // n_set
    for _ in range(n_set):
        e = random_effect(d, rng)
        p = float(np.trace(rho_true @ e).real)
        drawn = rng.multinomial(per_setting, [p, 1.0 - p])
        effects += [PovmEffect(e), PovmEffect(np.eye(d) - e)]
        counts += [int(drawn[0]), int(drawn[1])]
    return MeasurementDataset.from_counts(effects, counts)


def qutrit_mub_settings() -> list[list[np.ndarray]]:
    """Four mutually unbiased bases for d = 3: the computational basis plus
    the phase-twisted Fourier bases diag(w^(m j^2)) F / sqrt(3), m = 0, 1, 2.
    Their projectors span the full Hermitian space."""
    w = np.exp(2j * np.pi / 3)
    fourier = np.array([[w ** (j * k) for k in range(3)] for j in range(3)]) / np.sqrt(3)
    bases = [np.eye(3, dtype=complex)]
    for m in range(3):
        twist = np.diag([w ** (m * j * j) for j in range(3)])
        bases.append(twist @ fourier)
    return [
        [np.outer(b[:, k], b[:, k].conj()) for k in range(3)] for b in bases
    ]


def effects_span_hermitian(effects) -> bool:
    mats = [e.matrix if isinstance(e, PovmEffect) else e for e in effects]
    d = mats[0].shape[0]
    rows = [np.concatenate([m.real.ravel(), m.imag.ravel()]) for m in mats]
    return np.linalg.matrix_rank(np.array(rows), tol=1e-10) == d * d


def tangent_fd_hessian(
    ds: MeasurementDataset,
    rho: DensityMatrix,
    basis: TangentBasis,
    step: float = 1e-3,
) -> np.ndarray:
    """Finite-difference Hessian of the log-likelihood along curves that stay
    on the rank-r unit-trace manifold through rho.

    Each tangent basis element is lifted to a curve
    exp(W) diag(0, Delta_r + zeta) exp(-W) in the eigenframe of rho; mixed
    second differences of f along joint curves give the Hessian. Independent
    of the curvature-operator code under test.
    """
    spec = rho.spectral()
    u, vals = spec.unitary, spec.eigenvalues
    d, r = rho.dim, basis.rank
    delta_r = np.diag(vals[d - r:])
    inv_delta = np.linalg.inv(delta_r)

    coords = []
    for e in basis.elements:
        ef = u.conj().T @ e.matrix @ u
        block = ef[: d - r, d - r:]
        zeta = ef[d - r:, d - r:]
        coords.append((zeta, block @ inv_delta))

    stack, weights = ds.effect_stack, ds.weights
    seen = weights > 0

    def f_at(zeta, omega):
        w_anti = np.zeros((d, d), dtype=complex)
        w_anti[: d - r, d - r:] = omega
        w_anti[d - r:, : d - r] = -omega.conj().T
        core = np.zeros((d, d), dtype=complex)
        core[d - r:, d - r:] = delta_r + zeta
        state = u @ (expm(w_anti) @ core @ expm(-w_anti)) @ u.conj().T
        p = np.einsum("mij,ji->m", stack, state).real
        return float(weights[seen] @ np.log(p[seen]))

    n = len(coords)
    h = step
    out = np.zeros((n, n))
    zero = (np.zeros((r, r), complex), np.zeros((d - r, r), complex))
    f0 = f_at(*zero)
    for a in range(n):
        za, oa = coords[a]
        out[a, a] = (f_at(h * za, h * oa) - 2 * f0 + f_at(-h * za, -h * oa)) / h**2
        for b in range(a + 1, n):
            zb, ob = coords[b]
            out[a, b] = out[b, a] = (
                f_at(h * (za + zb), h * (oa + ob))
                - f_at(h * (za - zb), h * (oa - ob))
                - f_at(h * (zb - za), h * (ob - oa))
                + f_at(-h * (za + zb), -h * (oa + ob))
            ) / (4 * h**2)
    return out
