"""Command-line front end: dataset simulation, the estimation pipeline,
certification, the Monte Carlo oracle, and self-checks of the sharp-peak
formulas.

Exit codes are stable for pipelines: 0 success, 2 parse error, 3 failed
certificate, 4 gap/validity refusal (including a refused Monte Carlo
estimate). Plot output is data-only CSV; no rendering here.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass

import click
import numpy as np

from .bayes import bayes_report
from .checks import convergence_table, corollary_table
from .hermitian import DensityMatrix, HermitianMatrix, from_json_array, to_json_array
from .likelihood import MeasurementDataset, PovmEffect
from .maxlike import SolverOptions, certify as certify_state, solve
from .montecarlo import EffectiveSampleSizeError, McOptions, mc_bayes

_POVM_SUM_TOL = 1e-10
_PROB_SUM_TOL = 1e-9


def _fail_parse(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _fail_parse(f"cannot read {path}: {exc}")


def _load_dataset(path: str) -> MeasurementDataset:
    try:
        return MeasurementDataset.from_json_obj(_load_json(path))
    except ValueError as exc:
        _fail_parse(f"bad dataset {path}: {exc}")


def _load_matrix(path: str) -> HermitianMatrix:
    obj = _load_json(path)
    if isinstance(obj, dict):
        obj = obj.get("matrix", obj)
    try:
        return HermitianMatrix(from_json_array(obj))
    except ValueError as exc:
        _fail_parse(f"bad matrix {path}: {exc}")


def _emit(payload: dict, output: str | None) -> None:
    text = json.dumps(payload, indent=1)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@dataclass(frozen=True)
class SimulationSpec:
    """Measurement plan for synthetic data: a true state, POVM settings
    (each summing to the identity), a shot budget, and a seed."""

    dim: int
    true_state: DensityMatrix
    settings: tuple[tuple[PovmEffect, ...], ...]
    shots: int
    seed: int

    def __post_init__(self):
        if self.shots <= 0:
            raise ValueError("shots must be positive")
        for i, setting in enumerate(self.settings):
            total = sum(e.matrix for e in setting)
            if np.abs(total - np.eye(self.dim)).max() > _POVM_SUM_TOL:
                raise ValueError(f"setting {i} does not sum to the identity")

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SimulationSpec":
        try:
            dim = int(obj["dim"])
            state = DensityMatrix(from_json_array(obj["true_state"]))
            raw = obj["settings"] if "settings" in obj else [obj["povm"]]
            settings = tuple(
                tuple(PovmEffect(from_json_array(e)) for e in setting) for setting in raw
            )
            return cls(dim=dim, true_state=state, settings=settings,
                       shots=int(obj["shots"]), seed=int(obj.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed simulation spec: {exc}") from exc


def simulate_dataset(spec: SimulationSpec, seed: int | None = None) -> MeasurementDataset:
    """Multinomial counts per setting with probabilities tr(rho_true Y);
    shots are split across settings as evenly as possible."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    n_set = len(spec.settings)
    base, extra = divmod(spec.shots, n_set)
    effects: list[PovmEffect] = []
    counts: list[int] = []
    for i, setting in enumerate(spec.settings):
        probs = np.array(
            [float(np.trace(spec.true_state.matrix @ e.matrix).real) for e in setting]
        )
        if abs(probs.sum() - 1.0) > _PROB_SUM_TOL:
            raise ValueError(f"setting {i} probabilities sum to {probs.sum()!r}, not 1")
        probs = np.clip(probs, 0.0, None)
        shots_i = base + (1 if i < extra else 0)
        drawn = rng.multinomial(shots_i, probs / probs.sum())
        effects.extend(setting)
        counts.extend(int(c) for c in drawn)
    return MeasurementDataset(effects, np.asarray(counts, float) / spec.shots, spec.shots)


@click.group()
def main():
    """Maximum-likelihood state estimation with sharp-peak Bayesian error bars."""


@main.command()
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", type=click.Path(), default=None, help="Dataset JSON path.")
@click.option("--seed", type=int, default=None, help="Override the seed in the spec.")
def simulate(spec_file, output, seed):
    """Draw multinomial counts for a simulation spec and write the dataset."""
    try:
        spec = SimulationSpec.from_json_obj(_load_json(spec_file))
        ds = simulate_dataset(spec, seed=seed)
    except ValueError as exc:
        _fail_parse(str(exc))
    _emit(ds.to_json_obj(), output)


@main.command()
@click.argument("dataset_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("observable_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--rank-tol", type=float, default=1e-7, show_default=True)
@click.option("--tol", type=float, default=1e-9, show_default=True,
              help="Certificate residual tolerance.")
@click.option("--gap-tol", type=float, default=1e-6, show_default=True)
@click.option("--max-iters", type=int, default=20000, show_default=True)
@click.option("--force", is_flag=True, help="Emit a flagged report even on failures.")
@click.option("--output", "-o", type=click.Path(), default=None)
@click.option("--plot-data", type=click.Path(), default=None,
              help="CSV of k, mean-k*sigma, mean+k*sigma interval endpoints.")
@click.option("--trace", type=click.Path(), default=None,
              help="Write the solver iteration log as JSON lines.")
def estimate(dataset_file, observable_file, rank_tol, tol, gap_tol, max_iters,
             force, output, plot_data, trace):
    """Solve, certify, and report mean/variance for an observable."""
    ds = _load_dataset(dataset_file)
    obs = _load_matrix(observable_file)
    opts = SolverOptions(max_iters=max_iters, grad_tol=tol, rank_tol=rank_tol)
    rho, cert, log = solve(ds, opts)
    if trace:
        with open(trace, "w", encoding="utf-8") as fh:
            for rec in log:
                fh.write(json.dumps(rec.to_json_obj()) + "\n")
    if not cert.passed and not force:
        _emit(cert.to_json_obj(), output)
        sys.exit(3)
    report = bayes_report(ds, obs, rho, cert, gap_tol=gap_tol, force=force)
    _emit(report.to_json_obj(), output)
    if plot_data and report.variance is not None:
        sigma = report.variance**0.5
        with open(plot_data, "w", encoding="utf-8") as fh:
            fh.write("k,lower,upper\n")
            for k in (1, 2, 3):
                fh.write(f"{k},{report.mean - k * sigma!r},{report.mean + k * sigma!r}\n")
    if not report.valid and not force:
        sys.exit(4)


@main.command()
@click.argument("dataset_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("state_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--rank-tol", type=float, default=1e-7, show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--output", "-o", type=click.Path(), default=None)
def certify(dataset_file, state_file, rank_tol, tol, output):
    """Check the optimality conditions of a state against a dataset."""
    ds = _load_dataset(dataset_file)
    try:
        rho = DensityMatrix(_load_matrix(state_file))
        cert = certify_state(ds, rho, rank_tol=rank_tol, tol=tol)
    except ValueError as exc:
        _fail_parse(str(exc))
    _emit(cert.to_json_obj(), output)
    if not cert.passed:
        sys.exit(3)


@main.command()
@click.argument("dataset_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("observable_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--samples", type=int, default=20000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--batches", type=int, default=20, show_default=True)
@click.option("--output", "-o", type=click.Path(), default=None)
def oracle(dataset_file, observable_file, samples, seed, batches, output):
    """Monte Carlo reference for the Bayesian mean and variance."""
    ds = _load_dataset(dataset_file)
    obs = _load_matrix(observable_file)
    try:
        est = mc_bayes(ds, obs, McOptions(samples=samples, seed=seed, batches=batches))
    except EffectiveSampleSizeError as exc:
        click.echo(f"refused: {exc}", err=True)
        sys.exit(4)
    _emit(est.to_json_obj(), output)


@main.command("laplace-check")
@click.option("--case", type=click.Choice(["interior", "boundary"]), required=True)
@click.option("--branch", type=click.Choice(["1", "2", "variance"]), default="1",
              show_default=True, help="Leading term, vanishing-weight term, or variance.")
@click.option("--m", "m_weight", type=int, default=0, show_default=True,
              help="Monomial weight exponent (boundary case only).")
@click.option("--n", "n_free", type=int, default=1, show_default=True,
              help="Number of free coordinates.")
@click.option("--n-sweep", default="100,200,400,800", show_default=True,
              help="Comma-separated sharpness values N.")
@click.option("--rel-tol", type=float, default=1e-6, show_default=True)
@click.option("--output", "-o", type=click.Path(), default=None, help="CSV path.")
def laplace_check(case, branch, m_weight, n_free, n_sweep, rel_tol, output):
    """Compare closed-form leading terms against adaptive quadrature."""
    try:
        n_values = [float(tok) for tok in n_sweep.split(",") if tok.strip()]
    except ValueError as exc:
        _fail_parse(f"bad --n-sweep: {exc}")
    dim = n_free + (1 if case == "boundary" else 0)
    if dim > 3 or n_free < 0:
        _fail_parse(f"quadrature supports up to 3 dimensions, got {dim}")
    if case == "interior" and n_free == 0:
        _fail_parse("interior case needs at least one free coordinate")
    if branch == "variance":
        rows = corollary_table(case, m_weight, n_free, n_values, rel_tol)
    else:
        rows = convergence_table(case, int(branch), m_weight, n_free, n_values, rel_tol)
    header = f"{'N':>8s} {'asymptotic':>16s} {'quadrature':>16s} {'ratio':>12s}"
    click.echo(header)
    for r in rows:
        click.echo(
            f"{r['N']:8.0f} {r['asymptotic']:16.8e} {r['quadrature']:16.8e} {r['ratio']:12.8f}"
        )
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write("N,asymptotic,quadrature,ratio\n")
            for r in rows:
                fh.write(f"{r['N']!r},{r['asymptotic']!r},{r['quadrature']!r},{r['ratio']!r}\n")


if __name__ == "__main__":
    main()
