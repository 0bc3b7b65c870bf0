"""Complex Hermitian linear algebra: spectral tools, Frobenius geometry and
projection onto the density-matrix set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_TOL_DEFAULT = 1e-7


class HermitianMatrix:
    """Immutable d x d complex Hermitian matrix.

    The constructor symmetrizes, H <- (H + H^dag)/2, so slightly asymmetric
    inputs (e.g. 1e-13 residue from finite differencing) are accepted rather
    than rejected.
    """

    __slots__ = ("_m",)

    def __init__(self, entries):
        m = np.array(entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        m = (m + m.conj().T) / 2.0
        m.setflags(write=False)
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    def trace(self) -> float:
        return float(np.trace(self._m).real)

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self._m))

    def __add__(self, other: "HermitianMatrix") -> "HermitianMatrix":
        return HermitianMatrix(self._m + other._m)

    def __sub__(self, other: "HermitianMatrix") -> "HermitianMatrix":
        return HermitianMatrix(self._m - other._m)

    def __neg__(self) -> "HermitianMatrix":
        return HermitianMatrix(-self._m)

    def __mul__(self, scalar: float) -> "HermitianMatrix":
        return HermitianMatrix(self._m * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"HermitianMatrix(dim={self.dim})"


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and a unitary of eigenvectors, H = U diag(w) U^dag."""

    eigenvalues: np.ndarray
    unitary: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.unitary * self.eigenvalues) @ self.unitary.conj().T


class DensityMatrix:
    """Hermitian, positive semidefinite (within 1e-10), unit-trace matrix.

    The spectral decomposition is computed at construction (it doubles as the
    validity check) and cached for downstream rank/pseudo-inverse calls.
    """

    __slots__ = ("_base", "_spec")

    _EIG_TOL = 1e-10
    _TRACE_TOL = 1e-10

    def __init__(self, base):
        if not isinstance(base, HermitianMatrix):
            base = HermitianMatrix(base)
        spec = spectral_decompose(base)
        if spec.eigenvalues[0] < -self._EIG_TOL:
            raise ValueError(
                f"not positive semidefinite: min eigenvalue {spec.eigenvalues[0]:.3e}"
            )
        tr = float(np.sum(spec.eigenvalues))
        if abs(tr - 1.0) > self._TRACE_TOL:
            raise ValueError(f"trace {tr!r} differs from 1 beyond tolerance")
        self._base = base
        self._spec = spec

    @classmethod
    def _from_eigh(cls, eigenvalues: np.ndarray, unitary: np.ndarray) -> "DensityMatrix":
        # Trusted fast path for callers that already hold a valid decomposition.
        obj = cls.__new__(cls)
        m = (unitary * eigenvalues) @ unitary.conj().T
        obj._base = HermitianMatrix(m)
        obj._spec = SpectralDecomposition(
            eigenvalues=np.asarray(eigenvalues, dtype=float), unitary=np.asarray(unitary)
        )
        return obj

    @property
    def base(self) -> HermitianMatrix:
        return self._base

    @property
    def matrix(self) -> np.ndarray:
        return self._base.matrix

    @property
    def dim(self) -> int:
        return self._base.dim

    def spectral(self) -> SpectralDecomposition:
        return self._spec

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


def frobenius_inner(a: HermitianMatrix, b: HermitianMatrix) -> float:
    """Frobenius inner product tr(AB) of two Hermitian matrices (real)."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    # tr(AB) = sum_ij A_ij conj(B_ij) for Hermitian B.
    return float(np.vdot(b.matrix, a.matrix).real)


def spectral_decompose(h: HermitianMatrix) -> SpectralDecomposition:
    """Eigendecomposition with ascending eigenvalues.

    Raises numpy.linalg.LinAlgError if the iterative eigensolver fails to
    converge.
    """
    w, u = np.linalg.eigh(h.matrix)
    return SpectralDecomposition(eigenvalues=w, unitary=u)


def pseudo_inverse(rho: DensityMatrix, rank_tol: float = RANK_TOL_DEFAULT) -> HermitianMatrix:
    """Moore-Penrose pseudo-inverse: eigenvalues <= rank_tol map to 0, the rest
    to their reciprocals, in the same eigenbasis."""
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    spec = rho.spectral()
    keep = spec.eigenvalues > rank_tol
    inv = np.zeros_like(spec.eigenvalues)
    inv[keep] = 1.0 / spec.eigenvalues[keep]
    return HermitianMatrix((spec.unitary * inv) @ spec.unitary.conj().T)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(v) + 1)
    cond = u - css / ks > 0
    k = ks[cond][-1]
    tau = css[k - 1] / k
    return np.maximum(v - tau, 0.0)


def project_to_density(h: HermitianMatrix) -> DensityMatrix:
    """Nearest density matrix in Frobenius distance.

    Eigendecompose, project the eigenvalue vector onto the probability
    simplex, reassemble in the same eigenbasis.
    """
    spec = spectral_decompose(h)
    w = _project_simplex(spec.eigenvalues.real)
    return DensityMatrix._from_eigh(w, spec.unitary)


def numerical_rank(
    rho: DensityMatrix, rank_tol: float = RANK_TOL_DEFAULT
) -> tuple[int, HermitianMatrix]:
    """Numerical rank r (eigenvalues > rank_tol) and the orthogonal projector
    onto the corresponding eigenspace (the numerical range of rho)."""
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    spec = rho.spectral()
    keep = spec.eigenvalues > rank_tol
    r = int(np.count_nonzero(keep))
    vecs = spec.unitary[:, keep]
    proj = HermitianMatrix(vecs @ vecs.conj().T)
    return r, proj


def to_json_array(m) -> list:
    """Serialize a matrix (or anything with a .matrix) as nested row-major
    lists of [re, im] pairs."""
    a = np.asarray(getattr(m, "matrix", m))
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def from_json_array(obj) -> np.ndarray:
    """Inverse of to_json_array. Raises ValueError on malformed input."""
    try:
        a = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed matrix payload: {exc}") from exc
    if a.ndim != 3 or a.shape[0] != a.shape[1] or a.shape[2] != 2:
        raise ValueError(f"expected shape (d, d, 2) of [re, im] pairs, got {a.shape}")
    return a[:, :, 0] + 1j * a[:, :, 1]
