"""Leading terms of sharp-peak integrals int x^m g exp(N f) dx dz over a box,
for maxima in the interior or on the x = 0 face, plus an adaptive quadrature
reference for validating them.

Values are carried as leading * N**order * exp(log_scale) with the
exponentially large/small factor exp(N f(0)) kept in log_scale, so nothing
overflows even for strongly negative peak values.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_FD_STEP = float(np.finfo(float).eps) ** (1.0 / 3.0)
_HESS_DEFINITE_TOL = 1e-12


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach tolerance within its budget."""


def _fd_step(coord: float = 0.0) -> float:
    return _FD_STEP * max(1.0, abs(coord))


@dataclass(frozen=True)
class ScalarField:
    """Smooth scalar function of a boundary coordinate x and free coordinates z.

    Args:
        dim_z: number of free coordinates n >= 0.
        fn: callable (x, z) -> float with z a length-n array; x is ignored
            when dim_x == 0.
        dim_x: 0 (no boundary coordinate) or 1.
        grad_fn: optional analytic gradient, (x, z) -> (df_dx, df_dz array).
        hess_z_fn: optional analytic z-Hessian, (x, z) -> (n, n) array.
        fn_vec: optional batched evaluator, (x of shape (P,), z of shape
            (P, n)) -> (P,); quadrature uses it when present, otherwise it
            falls back to looping fn.

    Finiteness on the closed box [0, 1] x [-1, 1]^n is spot-checked on a small
    deterministic sample at construction.
    """

    dim_z: int
    fn: Callable[[float, np.ndarray], float]
    dim_x: int = 0
    grad_fn: Optional[Callable] = None
    hess_z_fn: Optional[Callable] = None
    fn_vec: Optional[Callable] = None

    def __post_init__(self):
        if self.dim_x not in (0, 1):
            raise ValueError("dim_x must be 0 or 1")
        if self.dim_z < 0:
            raise ValueError("dim_z must be nonnegative")
        for x, z in self._sample_points():
            v = self.fn(x, z)
            if not math.isfinite(v):
                raise ValueError(f"field not finite at x={x}, z={z}: {v}")

    def _sample_points(self):
        xs = [0.0, 0.5, 1.0] if self.dim_x else [0.0]
        n = self.dim_z
        zs = [np.zeros(n)]
        if n:
            zs.append(np.full(n, 1.0))
            zs.append(np.full(n, -1.0))
            zs.append(np.full(n, 0.37))
        return [(x, z) for x in xs for z in zs]

    def value(self, x: float, z) -> float:
        return float(self.fn(x, np.asarray(z, dtype=float)))

    def values(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Batched evaluation at P points; loops fn unless fn_vec is set."""
        if self.fn_vec is not None:
            return np.asarray(self.fn_vec(x, z), dtype=float)
        return np.array([self.fn(float(xi), zi) for xi, zi in zip(x, z)], dtype=float)

    def gradient_at_origin(self) -> tuple[float, np.ndarray]:
        """(d/dx, d/dz) at the origin; central differences unless analytic."""
        z0 = np.zeros(self.dim_z)
        if self.grad_fn is not None:
            gx, gz = self.grad_fn(0.0, z0)
            return float(gx), np.asarray(gz, dtype=float)
        h = _fd_step()
        if self.dim_x:
            gx = (self.value(h, z0) - self.value(-h, z0)) / (2 * h)
        else:
            gx = 0.0
        gz = np.zeros(self.dim_z)
        for k in range(self.dim_z):
            zp = z0.copy()
            zp[k] = h
            zm = z0.copy()
            zm[k] = -h
            gz[k] = (self.value(0.0, zp) - self.value(0.0, zm)) / (2 * h)
        return gx, gz

    def hessian_z_at_origin(self) -> np.ndarray:
        """z-Hessian at the origin; central differences unless analytic."""
        if self.hess_z_fn is not None:
            hz = np.asarray(self.hess_z_fn(0.0, np.zeros(self.dim_z)), dtype=float)
            return (hz + hz.T) / 2.0
        return _fd_hessian(lambda z: self.value(0.0, z), self.dim_z)


def _fd_hessian(fn: Callable[[np.ndarray], float], n: int) -> np.ndarray:
    h = _fd_step()
    out = np.zeros((n, n))
    f0 = fn(np.zeros(n))

    def at(**shifts) -> float:
        z = np.zeros(n)
        for idx, s in shifts.items():
            z[int(idx[1:])] += s
        return fn(z)

    for i in range(n):
        out[i, i] = (at(**{f"z{i}": h}) - 2 * f0 + at(**{f"z{i}": -h})) / h**2
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = (
                at(**{f"z{i}": h, f"z{j}": h})
                - at(**{f"z{i}": h, f"z{j}": -h})
                - at(**{f"z{i}": -h, f"z{j}": h})
                + at(**{f"z{i}": -h, f"z{j}": -h})
            ) / (4 * h**2)
    return (out + out.T) / 2.0


@dataclass(frozen=True)
class ExpansionInput:
    """Local data of (f, g) at the maximizer, which must sit at the origin.

    grad_x and m are present only for a maximum on the x = 0 face; g_hess_z
    only for the branches with g vanishing at the maximizer.
    """

    f0: float
    hess_z: np.ndarray
    g0: float
    N: float
    grad_x: Optional[float] = None
    g_hess_z: Optional[np.ndarray] = None
    m: Optional[int] = None

    def __post_init__(self):
        hz = np.atleast_2d(np.asarray(self.hess_z, dtype=float))
        if hz.size == 0:
            hz = np.zeros((0, 0))
        if hz.shape[0] != hz.shape[1]:
            raise ValueError(f"hess_z must be square, got {hz.shape}")
        hz = (hz + hz.T) / 2.0
        if hz.size and np.max(np.linalg.eigvalsh(hz)) >= -_HESS_DEFINITE_TOL:
            raise ValueError("hess_z must be negative definite")
        object.__setattr__(self, "hess_z", hz)
        if self.g_hess_z is not None:
            gh = np.atleast_2d(np.asarray(self.g_hess_z, dtype=float))
            if gh.size == 0:
                gh = np.zeros((0, 0))
            if gh.shape != hz.shape:
                raise ValueError("g_hess_z shape differs from hess_z")
            object.__setattr__(self, "g_hess_z", (gh + gh.T) / 2.0)
        if self.grad_x is not None and not self.grad_x < 0:
            raise ValueError(f"boundary slope grad_x must be negative, got {self.grad_x}")
        if self.m is not None and (self.m < 0 or int(self.m) != self.m):
            raise ValueError("m must be a nonnegative integer")
        if not self.N > 0:
            raise ValueError("N must be positive")

    @property
    def n(self) -> int:
        return self.hess_z.shape[0]


@dataclass(frozen=True)
class AsymptoticValue:
    """A value of the form leading * N**order * exp(log_scale).

    The exp(N f(0)) factor lives in log_scale so the stored fields stay finite
    for arbitrarily negative peak values.
    """

    leading: float
    order: float
    log_scale: float
    N: float

    @property
    def magnitude(self) -> float:
        """leading * N**order, without the exponential scale factor."""
        return self.leading * self.N**self.order

    def value(self) -> float:
        """Full value; may underflow/overflow in double precision by design."""
        return self.magnitude * math.exp(self.log_scale)


def expansion_input_from_fields(
    f: ScalarField,
    g: ScalarField,
    m: Optional[int],
    N: float,
    second_order: bool = False,
) -> ExpansionInput:
    """Extract the local expansion data of (f, g) at the origin."""
    if (f.dim_x, f.dim_z) != (g.dim_x, g.dim_z):
        raise ValueError("f and g must share dimensions")
    z0 = np.zeros(f.dim_z)
    f0 = f.value(0.0, z0)
    g0 = g.value(0.0, z0)
    grad_x = None
    if f.dim_x:
        grad_x, _ = f.gradient_at_origin()
    g_hess = g.hessian_z_at_origin() if second_order else None
    return ExpansionInput(
        f0=f0,
        hess_z=f.hessian_z_at_origin(),
        g0=g0,
        N=N,
        grad_x=grad_x,
        g_hess_z=g_hess,
        m=m if f.dim_x else None,
    )


def _sqrt_abs_det(hess: np.ndarray) -> float:
    return math.sqrt(abs(float(np.linalg.det(hess))))


def interior_leading(inp: ExpansionInput) -> AsymptoticValue:
    """Dominant term for an interior maximum with g nonzero there:
    g(0) (2 pi)^(n/2) e^(N f(0)) N^(-n/2) / sqrt|det f''_z|."""
    if inp.m is not None or inp.grad_x is not None:
        raise ValueError("interior branch takes no boundary data (m, grad_x)")
    if inp.g0 == 0.0:
        raise ValueError("interior leading term needs g(0) != 0")
    n = inp.n
    lead = inp.g0 * (2 * math.pi) ** (n / 2.0) / _sqrt_abs_det(inp.hess_z)
    return AsymptoticValue(leading=lead, order=-n / 2.0, log_scale=inp.N * inp.f0, N=inp.N)


def interior_second_order(inp: ExpansionInput) -> AsymptoticValue:
    """Dominant term for an interior maximum with g and its gradient vanishing:
    tr(-g''_z (f''_z)^-1) (2 pi)^(n/2) e^(N f(0)) N^(-n/2-1) / (2 sqrt|det f''_z|)."""
    if inp.m is not None or inp.grad_x is not None:
        raise ValueError("interior branch takes no boundary data (m, grad_x)")
    if abs(inp.g0) > 1e-10:
        raise ValueError(f"this branch needs g(0) = 0, got {inp.g0}")
    if inp.g_hess_z is None:
        raise ValueError("g_hess_z required for the vanishing-g branch")
    n = inp.n
    lead = (
        trace_pairing(inp.g_hess_z, inp.hess_z)
        * (2 * math.pi) ** (n / 2.0)
        / (2.0 * _sqrt_abs_det(inp.hess_z))
    )
    return AsymptoticValue(leading=lead, order=-n / 2.0 - 1.0, log_scale=inp.N * inp.f0, N=inp.N)


def boundary_leading(inp: ExpansionInput) -> AsymptoticValue:
    """Dominant term for a maximum on the x = 0 face with weight x^m and g
    nonzero there:
    g m! (2 pi)^(n/2) e^(N f) N^(-m-n/2-1) / (sqrt|det f''_z| (-df/dx)^(m+1))."""
    if inp.m is None or inp.grad_x is None:
        raise ValueError("boundary branch needs m and grad_x")
    if inp.g0 == 0.0:
        raise ValueError("boundary leading term needs g(0,0) != 0")
    n, m = inp.n, int(inp.m)
    lead = (
        inp.g0
        * math.factorial(m)
        * (2 * math.pi) ** (n / 2.0)
        / (_sqrt_abs_det(inp.hess_z) * (-inp.grad_x) ** (m + 1))
    )
    return AsymptoticValue(
        leading=lead, order=-m - n / 2.0 - 1.0, log_scale=inp.N * inp.f0, N=inp.N
    )


def boundary_second_order(inp: ExpansionInput) -> AsymptoticValue:
    """Dominant term on the x = 0 face when g and its first derivatives vanish:
    tr(-g''_z (f''_z)^-1) m! (2 pi)^(n/2) N^(-m-n/2-2) / (2 sqrt|det| (-df/dx)^(m+1))."""
    if inp.m is None or inp.grad_x is None:
        raise ValueError("boundary branch needs m and grad_x")
    if abs(inp.g0) > 1e-10:
        raise ValueError(f"this branch needs g(0,0) = 0, got {inp.g0}")
    if inp.g_hess_z is None:
        raise ValueError("g_hess_z required for the vanishing-g branch")
    n, m = inp.n, int(inp.m)
    lead = (
        trace_pairing(inp.g_hess_z, inp.hess_z)
        * math.factorial(m)
        * (2 * math.pi) ** (n / 2.0)
        / (2.0 * _sqrt_abs_det(inp.hess_z) * (-inp.grad_x) ** (m + 1))
    )
    return AsymptoticValue(
        leading=lead, order=-m - n / 2.0 - 2.0, log_scale=inp.N * inp.f0, N=inp.N
    )


def trace_pairing(g_hess: np.ndarray, f_hess: np.ndarray) -> float:
    """tr(-g_hess @ f_hess^-1), the coordinate-free curvature pairing.

    Invariant under simultaneous congruence g -> J^T g J, f -> J^T f J for any
    invertible J. Raises numpy.linalg.LinAlgError when f_hess is singular.
    """
    g = np.atleast_2d(np.asarray(g_hess, dtype=float))
    f = np.atleast_2d(np.asarray(f_hess, dtype=float))
    if g.size == 0 and f.size == 0:
        return 0.0
    if g.shape != f.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {f.shape}")
    return float(-np.trace(np.linalg.solve(f, g)))


def corollary_mean_variance(
    f: ScalarField, g: ScalarField, m: Optional[int], N: float
) -> tuple[float, float]:
    """Leading normalized mean and variance of g under the weight x^m e^(N f).

    mean = g at the maximizer; variance = tr(-h'' (f''_z)^-1) / (2N) with
    h = (g - g(0,0))^2, whose Hessian at the origin is 2 (grad_z g)(grad_z g)^T.
    The maximizer must sit at the origin and f''_z must be negative definite.
    """
    hess_f = f.hessian_z_at_origin()
    if hess_f.size and np.max(np.linalg.eigvalsh(hess_f)) >= -_HESS_DEFINITE_TOL:
        raise ValueError("f Hessian at the maximizer must be negative definite")
    g0 = g.value(0.0, np.zeros(g.dim_z))
    _, g_grad_z = g.gradient_at_origin()
    h_hess = 2.0 * np.outer(g_grad_z, g_grad_z)
    variance = trace_pairing(h_hess, hess_f) / (2.0 * N) if g.dim_z else 0.0
    return g0, variance


# 15-point Kronrod nodes on [-1, 1] (ascending) with Kronrod weights; the
# embedded 7-point Gauss rule sits at every second node.
_XGK = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
    0.586087235467691, 0.741531185599394, 0.864864423359769,
    0.949107912342759, 0.991455371120813,
])
_WGK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_WG = np.zeros(15)
_WG[1:14:2] = [
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870,
]

_MAX_BOXES = 20_000


class _Box:
    """One tensor Gauss-Kronrod panel: cached rule values and error split."""

    __slots__ = ("lo", "hi", "integral", "error", "split_axis")

    def __init__(self, lo, hi, integrand):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        dim = len(lo)
        half = (self.hi - self.lo) / 2.0
        mid = (self.hi + self.lo) / 2.0
        axes_nodes = [mid[k] + half[k] * _XGK for k in range(dim)]
        grid = np.meshgrid(*axes_nodes, indexing="ij")
        pts = np.stack([a.reshape(-1) for a in grid], axis=-1)
        vals = integrand(pts).reshape((15,) * dim)
        jac = float(np.prod(half))

        def contract(weights_per_axis):
            v = vals
            for w in weights_per_axis:
                v = np.tensordot(v, w, axes=([0], [0]))
            return float(v)

        i_k = contract([_WGK] * dim) * jac
        i_g = contract([_WG] * dim) * jac
        self.integral = i_k
        self.error = abs(i_k - i_g)
        # Split along the axis whose Gauss/Kronrod disagreement is largest.
        per_axis = [
            abs(i_k - contract([_WG if a == k else _WGK for a in range(dim)]) * jac)
            for k in range(dim)
        ]
        self.split_axis = int(np.argmax(per_axis))

    def split(self, integrand):
        k = self.split_axis
        mid = 0.5 * (self.lo[k] + self.hi[k])
        lo2, hi1 = self.lo.copy(), self.hi.copy()
        hi1[k] = mid
        lo2[k] = mid
        return _Box(self.lo, hi1, integrand), _Box(lo2, self.hi, integrand)


def _initial_edges(f: ScalarField, N: float) -> list[np.ndarray]:
    """Per-axis cut points seeding the panel list at the peak scales
    (x ~ 1/N against the face, z ~ 1/sqrt(N) around the center)."""
    edges = []
    wz = min(0.8, 10.0 / math.sqrt(N))
    for _ in range(f.dim_z):
        edges.append(np.array([-1.0, -wz, wz, 1.0]))
    if f.dim_x:
        wx = 30.0 / N
        edges.append(np.array([0.0, wx, 1.0]) if wx < 1.0 else np.array([0.0, 1.0]))
    return edges


def quadrature_reference(
    f: ScalarField,
    g: ScalarField,
    m: Optional[int],
    N: float,
    rel_tol: float = 1e-9,
) -> AsymptoticValue:
    """Adaptive tensor-product Gauss-Kronrod quadrature of int x^m g e^(N f)
    over the box (0,1) x (-1,1)^n, with the peak value factored out.

    Panels carry a 15-point Kronrod rule per axis; the panel with the worst
    Gauss/Kronrod disagreement is bisected along its most uncertain axis until
    the accumulated error estimate is below rel_tol. Panel bookkeeping is
    deterministic, so results are reproducible bit for bit.

    Returns an AsymptoticValue with order 0 and log_scale = N f(origin).
    Raises QuadratureError when the subdivision budget is exhausted.
    """
    if (f.dim_x, f.dim_z) != (g.dim_x, g.dim_z):
        raise ValueError("f and g must share dimensions")
    dim = f.dim_x + f.dim_z
    if dim > 3:
        raise ValueError(f"quadrature reference capped at 3 dimensions, got {dim}")
    if dim == 0:
        raise ValueError("nothing to integrate: dim_x + dim_z = 0")
    if not N > 0:
        raise ValueError("N must be positive")
    mm = int(m) if (f.dim_x and m is not None) else 0
    n = f.dim_z
    f0 = f.value(0.0, np.zeros(n))

    def integrand(pts: np.ndarray) -> np.ndarray:
        z = pts[:, :n]
        x = pts[:, n] if f.dim_x else np.zeros(len(pts))
        vals = g.values(x, z) * np.exp(N * (f.values(x, z) - f0))
        if mm:
            vals = vals * x**mm
        return vals

    edges = _initial_edges(f, N)
    boxes: list[_Box] = []
    for corner in np.ndindex(*[len(e) - 1 for e in edges]):
        lo = [edges[k][c] for k, c in enumerate(corner)]
        hi = [edges[k][c + 1] for k, c in enumerate(corner)]
        boxes.append(_Box(lo, hi, integrand))

    heap = [(-b.error, i, b) for i, b in enumerate(boxes)]
    heapq.heapify(heap)
    counter = len(boxes)
    total = math.fsum(b.integral for b in boxes)
    err = math.fsum(b.error for b in boxes)
    # 0.25 safety factor: |K - G| overestimates the Kronrod error on smooth
    # integrands, but not by a guaranteed margin.
    while err > 0.25 * rel_tol * max(abs(total), 1e-300):
        if counter >= _MAX_BOXES:
            raise QuadratureError(
                f"quadrature budget exhausted: {counter} panels, "
                f"error {err:.3e} vs target {rel_tol * abs(total):.3e}"
            )
        _, _, worst = heapq.heappop(heap)
        left, right = worst.split(integrand)
        total += left.integral + right.integral - worst.integral
        err += left.error + right.error - worst.error
        for child in (left, right):
            heapq.heappush(heap, (-child.error, counter, child))
            counter += 1
    # Fixed summation order for a deterministic final value.
    total = math.fsum(b.integral for _, _, b in sorted(heap, key=lambda t: t[1]))
    return AsymptoticValue(leading=float(total), order=0.0, log_scale=N * f0, N=N)
