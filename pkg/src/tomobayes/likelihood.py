"""Tomography log-likelihood: the weighted average of log outcome
probabilities over a measurement record, with exact gradient and Hessian.

Weights are empirical frequencies (counts / total shots), so the likelihood
value is the per-shot average log-probability and the full data likelihood is
exp(total_shots * f). With normalized weights, tr(rho grad f) = 1 identically;
that anchor is exploited by the optimality certificate.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .hermitian import DensityMatrix, HermitianMatrix, from_json_array, to_json_array

_PROB_FLOOR = 1e-300  # below this an outcome probability counts as zero

_WEIGHT_SUM_TOL = 1e-12
_PSD_TOL = 1e-10


class PovmEffect:
    """Positive semidefinite Hermitian measurement effect."""

    __slots__ = ("_h",)

    def __init__(self, matrix):
        h = matrix if isinstance(matrix, HermitianMatrix) else HermitianMatrix(matrix)
        w = np.linalg.eigvalsh(h.matrix)
        if w[0] < -_PSD_TOL:
            raise ValueError(f"effect not positive semidefinite: min eigenvalue {w[0]:.3e}")
        self._h = h

    @property
    def matrix(self) -> np.ndarray:
        return self._h.matrix

    @property
    def hermitian(self) -> HermitianMatrix:
        return self._h

    @property
    def dim(self) -> int:
        return self._h.dim


class MeasurementDataset:
    """Measurement effects with nonnegative weights summing to one.

    Args:
        effects: POVM effects, all of one dimension.
        weights: empirical frequencies; must sum to 1 within 1e-12.
        total_shots: number of independent shots behind the frequencies.
    """

    def __init__(self, effects: Sequence[PovmEffect], weights, total_shots: int):
        effects = tuple(
            e if isinstance(e, PovmEffect) else PovmEffect(e) for e in effects
        )
        if not effects:
            raise ValueError("dataset needs at least one effect")
        d = effects[0].dim
        if any(e.dim != d for e in effects):
            raise ValueError("effects have mixed dimensions")
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(effects),):
            raise ValueError(f"{len(effects)} effects but weight shape {w.shape}")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        if not (isinstance(total_shots, (int, np.integer)) and total_shots > 0):
            raise ValueError("total_shots must be a positive integer")
        w.setflags(write=False)
        self._effects = effects
        self._weights = w
        self._total = int(total_shots)
        self._stack = np.ascontiguousarray([e.matrix for e in effects])

    @classmethod
    def from_counts(cls, effects: Sequence[PovmEffect], counts) -> "MeasurementDataset":
        c = np.asarray(counts, dtype=float)
        total = c.sum()
        if total <= 0:
            raise ValueError("counts must sum to a positive total")
        return cls(effects, c / total, int(round(total)))

    @property
    def dim(self) -> int:
        return self._effects[0].dim

    @property
    def effects(self) -> tuple[PovmEffect, ...]:
        return self._effects

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def total_shots(self) -> int:
        return self._total

    @property
    def effect_stack(self) -> np.ndarray:
        """All effects as one (n_effects, d, d) array."""
        return self._stack

    def probabilities(self, rho: DensityMatrix) -> np.ndarray:
        """Outcome probabilities tr(rho Y) for every effect."""
        if rho.dim != self.dim:
            raise ValueError(f"dimension mismatch: state {rho.dim}, dataset {self.dim}")
        return np.einsum("mij,ji->m", self._stack, rho.matrix).real

    def to_json_obj(self) -> dict:
        return {
            "dim": self.dim,
            "total_shots": self._total,
            "outcomes": [
                {"effect": to_json_array(e), "count": float(w * self._total)}
                for e, w in zip(self._effects, self._weights)
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MeasurementDataset":
        try:
            total = obj["total_shots"]
            outcomes = obj["outcomes"]
            effects = [PovmEffect(from_json_array(o["effect"])) for o in outcomes]
            counts = np.asarray([o["count"] for o in outcomes], dtype=float)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed dataset payload: {exc}") from exc
        ds = cls(effects, counts / total, int(total))
        if "dim" in obj and int(obj["dim"]) != ds.dim:
            raise ValueError(f"declared dim {obj['dim']} != effect dim {ds.dim}")
        return ds

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "MeasurementDataset":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


def log_likelihood(ds: MeasurementDataset, rho: DensityMatrix) -> float:
    """Average log-likelihood sum_m w_m log tr(rho Y_m).

    Returns -inf when any outcome with positive weight has nonpositive
    probability; effects with zero weight do not constrain positivity.
    """
    p = ds.probabilities(rho)
    seen = ds.weights > 0
    if np.any(p[seen] <= _PROB_FLOOR):
        return -np.inf
    return float(np.dot(ds.weights[seen], np.log(p[seen])))


def gradient(ds: MeasurementDataset, rho: DensityMatrix) -> HermitianMatrix:
    """Likelihood gradient sum_m (w_m / tr(rho Y_m)) Y_m for the Frobenius
    inner product. Requires a finite likelihood at rho."""
    p = ds.probabilities(rho)
    seen = ds.weights > 0
    if np.any(p[seen] <= _PROB_FLOOR):
        raise ValueError("gradient undefined: an observed outcome has zero probability")
    coef = np.where(seen, ds.weights / np.where(seen, p, 1.0), 0.0)
    return HermitianMatrix(np.einsum("m,mij->ij", coef, ds.effect_stack))


class HessianForm:
    """Hessian of the log-likelihood at a fixed state, as a bilinear form.

    form(X, Z) = -sum_m w_m tr(X Y_m) tr(Z Y_m) / tr(rho Y_m)^2; symmetric and
    negative semidefinite on Hermitian arguments.
    """

    __slots__ = ("_stack", "_coef", "_dim")

    def __init__(self, stack: np.ndarray, coef: np.ndarray):
        self._stack = stack
        self._coef = coef
        self._dim = stack.shape[1]

    @property
    def dim(self) -> int:
        return self._dim

    def __call__(self, x: HermitianMatrix, z: HermitianMatrix) -> float:
        if x.dim != self._dim or z.dim != self._dim:
            raise ValueError("dimension mismatch in Hessian form arguments")
        tx = np.einsum("mij,ji->m", self._stack, x.matrix).real
        tz = np.einsum("mij,ji->m", self._stack, z.matrix).real
        return float(-np.dot(self._coef, tx * tz))


def hessian_form(ds: MeasurementDataset, rho: DensityMatrix) -> HessianForm:
    """Hessian bilinear form of the log-likelihood at rho."""
    p = ds.probabilities(rho)
    seen = ds.weights > 0
    if np.any(p[seen] <= _PROB_FLOOR):
        raise ValueError("Hessian undefined: an observed outcome has zero probability")
    coef = np.where(seen, ds.weights / np.where(seen, p, 1.0) ** 2, 0.0)
    return HessianForm(ds.effect_stack, coef)
