"""Reference estimator, convergence study and index-set anisotropy reports."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml

from .fem1d import FemSolver, Mesh
from .field import SchauderField, encode
from .multiindex import IndexSet
from .sampling import SamplingMeasure, as_seed_sequence
from .weights import RhoSequence, build_lambda, build_rho
from .wls import (GramAccumulator, GramSystem, WlsEstimator, budget_kappa_rule,
                  budget_log_rule, estimate, parseval_distance)

log = logging.getLogger(__name__)

OUTPUT_ENV = "WLS_LAB_OUTPUT_DIR"

# seed-tree tags
_REFERENCE, _TRIAL = 0, 1


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    beta: float = 0.5
    tau: float = 1.0
    L: int = 6
    r: int = 1
    M: int = 9
    n_schedule: list[int] = dc_field(default_factory=lambda: [25, 50, 100, 200, 400])
    budget_rule: str = "log"          # "log": 3 n ceil(ln n); "kappa": n <= kappa(s) m / ln m
    budget_s: float = 0.5             # s used by the kappa rule
    n_ref: int = 800
    m_ref_factor: int = 20            # m_ref = factor * n_ref * ceil(ln n_ref)
    mc_repetitions: int = 5
    seed: int = 2024
    forcing: float = 1.0
    output_dir: str = "wls-lab-output"
    workers: int = 1
    gate: bool = True                 # zero the estimator when ||G - I||_2 > 1/2
    anisotropy_n: list[int] = dc_field(default_factory=lambda: [10, 100, 250, 500, 1000])

    def __post_init__(self):
        self.n_schedule = [int(n) for n in self.n_schedule]
        self.anisotropy_n = [int(n) for n in self.anisotropy_n]
        if self.n_ref < max(self.n_schedule):
            raise ValueError("n_ref must be >= every n in the schedule")
        if self.M < self.L + 1:
            raise ValueError("mesh exponent M must be >= L + 1")
        if self.mc_repetitions < 1:
            raise ValueError("mc_repetitions must be >= 1")
        if self.budget_rule not in ("log", "kappa"):
            raise ValueError(f"unknown budget rule {self.budget_rule!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        cfg = cls.from_mapping(data)
        if os.environ.get(OUTPUT_ENV):
            cfg.output_dir = os.environ[OUTPUT_ENV]
        return cfg

    def dump(self) -> str:
        return yaml.safe_dump(dataclasses.asdict(self), sort_keys=False)

    @property
    def J(self) -> int:
        return 2 ** (self.L + 1) - 1

    @property
    def m_ref(self) -> int:
        return budget_log_rule(self.n_ref, self.m_ref_factor)

    def budget(self, n: int) -> int:
        if self.budget_rule == "log":
            return budget_log_rule(n)
        return budget_kappa_rule(n, self.budget_s)

    def rho(self) -> RhoSequence:
        return build_rho(self.beta, self.L, self.r, self.tau)

    def field(self) -> SchauderField:
        return SchauderField(self.L, self.tau)

    def mesh(self) -> Mesh:
        return Mesh.uniform(self.M)


def _seed(cfg: ExperimentConfig, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.seed, spawn_key=key)


def _windowed(pool: ThreadPoolExecutor | None, fn, items, window: int) -> Iterator:
    """Ordered map that keeps at most ``window`` results in flight."""
    if pool is None:
        for it in items:
            yield fn(it)
        return
    pending = []
    for it in items:
        pending.append(pool.submit(fn, it))
        if len(pending) >= window:
            yield pending.pop(0).result()
    for fut in pending:
        yield fut.result()


def run_wls(index_set: IndexSet, J: int, m: int, seed, solver: FemSolver,
            workers: int = 1, gate: bool = True) -> tuple[WlsEstimator, GramSystem]:
    """Draw m samples from the optimal measure, solve, and fit.

    Blocks are solved concurrently but reduced in block order, so the result
    does not depend on ``workers``.
    """
    measure = SamplingMeasure(index_set, J)
    acc = GramAccumulator(index_set, solver.mesh, J)

    def work(block):
        Y, w, B = block
        return Y, w, B, solver.solve_values(Y)

    blocks = measure.blocks(m, as_seed_sequence(seed))
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for Y, w, B, U in _windowed(pool, work, blocks, 2 * workers):
            acc.add(Y, w, U, B)
    finally:
        if pool is not None:
            pool.shutdown()
    system = acc.finalize()
    return estimate(system, index_set, solver.mesh, gate), system


def _solver(cfg: ExperimentConfig) -> FemSolver:
    return FemSolver(cfg.field(), cfg.mesh(), cfg.forcing)


def build_reference(cfg: ExperimentConfig, replicate: int = 0,
                    save: bool = True) -> WlsEstimator:
    rho = cfg.rho()
    lam = build_lambda(cfg.n_ref, rho, cfg.J)
    est, _ = run_wls(lam, cfg.J, cfg.m_ref, _seed(cfg, _REFERENCE, replicate),
                     _solver(cfg), cfg.workers)
    if not est.conditioned:
        raise ExperimentError(
            f"reference (n_ref={cfg.n_ref}, m_ref={cfg.m_ref}) failed the conditioning "
            f"gate with ||G-I||={est.gram_deviation:.3f}; re-run with another seed")
    if save:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        est.save(out / f"reference_{replicate}.est")
    return est


def fit_slope(n, err) -> float:
    """Least-squares slope of ``log err`` against ``log n``."""
    x, y = np.log(np.asarray(n, float)), np.log(np.asarray(err, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ConvergenceRow:
    n: int
    m: int
    mean_error: float
    stderr: float
    failures: int
    errors: list[float] = dc_field(repr=False)


@dataclass
class ConvergenceResult:
    rows: list[ConvergenceRow]
    slope_full: float
    slope_upper: float
    local_slopes: list[float]
    reference_distance: float | None = None
    checks: dict[str, bool] = dc_field(default_factory=dict)

    @property
    def staircase_spread(self) -> float:
        return max(self.local_slopes) - min(self.local_slopes) if self.local_slopes else 0.0

    @property
    def valid(self) -> bool:
        return all(self.checks.values())

    def csv(self) -> str:
        lines = ["n,m,mean_error,stderr,failures"]
        for r in self.rows:
            lines.append(f"{r.n},{r.m},{r.mean_error!r},{r.stderr!r},{r.failures}")
        return "\n".join(lines) + "\n"

    def gnuplot(self) -> str:
        lines = ["# n mean_error stderr"]
        lines += [f"{r.n} {r.mean_error!r} {r.stderr!r}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "slope_full": self.slope_full,
            "slope_upper": self.slope_upper,
            "local_slopes": self.local_slopes,
            "staircase_spread": self.staircase_spread,
            "reference_distance": self.reference_distance,
            "checks": self.checks,
            "valid": self.valid,
        }


def convergence_study(cfg: ExperimentConfig, reference: WlsEstimator,
                      second_reference: WlsEstimator | None = None,
                      write: bool = True) -> ConvergenceResult:
    """Monte Carlo averages of the Parseval distance to the reference."""
    rho = cfg.rho()
    solver = _solver(cfg)
    rows = []
    for n in cfg.n_schedule:
        lam = build_lambda(n, rho, cfg.J)
        m = cfg.budget(n)
        errors, failures = [], 0
        for t in range(cfg.mc_repetitions):
            try:
                est, _ = run_wls(lam, cfg.J, m, _seed(cfg, _TRIAL, n, t), solver,
                                 cfg.workers, cfg.gate)
            except Exception as exc:
                raise ExperimentError(f"trial failed at n={n}, repetition={t}") from exc
            failures += not est.conditioned
            errors.append(parseval_distance(reference, est))
        errs = np.array(errors)
        se = float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else 0.0
        rows.append(ConvergenceRow(n, m, float(errs.mean()), se, failures, errors))
        log.info("n=%d m=%d error=%.4e (+-%.1e) failures=%d", n, m, rows[-1].mean_error,
                 se, failures)

    fit_rows = [r for r in rows if r.n < cfg.n_ref]
    ns = [r.n for r in fit_rows]
    errs = [r.mean_error for r in fit_rows]
    slope_full = fit_slope(ns, errs) if len(ns) >= 2 else math.nan
    upper = fit_rows[len(fit_rows) // 2:] if len(fit_rows) >= 4 else fit_rows
    slope_upper = (fit_slope([r.n for r in upper], [r.mean_error for r in upper])
                   if len(upper) >= 2 else math.nan)
    local = [math.log(b.mean_error / a.mean_error) / math.log(b.n / a.n)
             for a, b in zip(fit_rows, fit_rows[1:])]

    result = ConvergenceResult(rows, slope_full, slope_upper, local)
    result.checks["monotone_trend"] = all(
        b.mean_error <= a.mean_error + 2.0 * math.hypot(a.stderr, b.stderr)
        for a, b in zip(rows, rows[1:]))
    if second_reference is not None:
        d = parseval_distance(reference, second_reference)
        result.reference_distance = d
        result.checks["reference_self_consistency"] = d < min(errs) / 3.0

    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "convergence.csv").write_text(result.csv())
        (out / "convergence.dat").write_text(result.gnuplot())
        (out / "convergence_summary.json").write_text(
            json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    return result


def run_convergence(cfg: ExperimentConfig, write: bool = True) -> ConvergenceResult:
    """Both references, then the study; the second reference only feeds the
    self-consistency check."""
    ref = build_reference(cfg, 0, save=write)
    ref2 = build_reference(cfg, 1, save=write)
    return convergence_study(cfg, ref, ref2, write=write)


# first four levels, leftmost hat of each
ANISOTROPY_VARIABLES = {"psi_0_0": encode(0, 0), "psi_1_0": encode(1, 0),
                        "psi_2_0": encode(2, 0), "psi_3_0": encode(3, 0)}
SECTION_PAIRS = [(encode(0, 0), encode(1, 0)), (encode(0, 0), encode(2, 0)),
                 (encode(1, 0), encode(2, 0)), (encode(2, 0), encode(3, 0)),
                 (encode(1, 0), encode(1, 1)), (encode(2, 0), encode(2, 1))]


def section(index_set: IndexSet, j: int, k: int) -> set[tuple[int, int]]:
    """Exponent pairs ``(nu_j, nu_k)`` of members supported in ``{j, k}``."""
    return {(nu[j], nu[k]) for nu in index_set if set(nu.support) <= {j, k}}


def section_is_symmetric(index_set: IndexSet, j: int, k: int) -> bool:
    sec = section(index_set, j, k)
    return sec == {(b, a) for a, b in sec}


def same_level(j: int, k: int) -> bool:
    return j.bit_length() == k.bit_length()


@dataclass
class AnisotropyReport:
    n_values: list[int]
    max_degrees: dict[int, dict[str, int]]
    sections: dict[tuple[int, int], list[tuple[int, int]]]
    symmetric: dict[tuple[int, int], bool]

    def csv(self) -> str:
        names = list(ANISOTROPY_VARIABLES)
        lines = ["n," + ",".join(names)]
        for n in self.n_values:
            lines.append(f"{n}," + ",".join(str(self.max_degrees[n][v]) for v in names))
        return "\n".join(lines) + "\n"

    def sections_csv(self) -> str:
        lines = ["j,k,nu_j,nu_k"]
        for (j, k), pts in self.sections.items():
            lines += [f"{j},{k},{a},{b}" for a, b in pts]
        return "\n".join(lines) + "\n"

    @property
    def valid(self) -> bool:
        return all(self.symmetric.values())


def anisotropy_report(cfg: ExperimentConfig, n_values: list[int] | None = None,
                      write: bool = True) -> AnisotropyReport:
    n_values = sorted(cfg.anisotropy_n if n_values is None else n_values)
    rho = cfg.rho()
    # Lambda_n is a prefix of Lambda_N in selection order, so one build suffices
    big = build_lambda(max(n_values), rho, cfg.J)
    maxdeg = {}
    for n in n_values:
        lam = IndexSet(big.members[:n], check=False)
        maxdeg[n] = {name: lam.max_degree_at(j) for name, j in ANISOTROPY_VARIABLES.items()}
    sections = {pair: sorted(section(big, *pair)) for pair in SECTION_PAIRS}
    symmetric = {pair: section_is_symmetric(big, *pair)
                 for pair in SECTION_PAIRS if same_level(*pair)}
    report = AnisotropyReport(n_values, maxdeg, sections, symmetric)
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "anisotropy.csv").write_text(report.csv())
        (out / "sections.csv").write_text(report.sections_csv())
    return report
