import math

import numpy as np
import pytest

from wls_lab import cli
from wls_lab.experiments import (ExperimentConfig, ExperimentError, anisotropy_report,
                                 build_reference, convergence_study, fit_slope, run_convergence,
                                 run_wls, section, section_is_symmetric)
from wls_lab.fem1d import FemSolver
from wls_lab.multiindex import IndexSet, MultiIndex
from wls_lab.wls import WlsEstimator


def small_cfg(tmp_path, **kw):
    base = dict(beta=0.5, L=2, M=4, n_schedule=[3, 6, 12], n_ref=30, mc_repetitions=2,
                output_dir=str(tmp_path / "out"), anisotropy_n=[1, 10, 50])
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(n_schedule=[10, 900], n_ref=800)
    with pytest.raises(ValueError):
        ExperimentConfig(L=6, M=6)
    with pytest.raises(ValueError):
        ExperimentConfig(mc_repetitions=0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"beta": 0.5, "bogus": 1})
    cfg = ExperimentConfig()
    assert cfg.J == 127 and cfg.m_ref == 20 * 800 * 7
    assert cfg.budget(50) == 600


def test_config_file_and_env_override(tmp_path, monkeypatch):
    path = tmp_path / "cfg.yaml"
    path.write_text(small_cfg(tmp_path).dump())
    cfg = ExperimentConfig.load(path)
    assert cfg == small_cfg(tmp_path)
    monkeypatch.setenv("WLS_LAB_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    assert ExperimentConfig.load(path).output_dir == str(tmp_path / "elsewhere")


def test_single_index_reference_is_the_mean(tmp_path):
    cfg = small_cfg(tmp_path, n_schedule=[1], n_ref=1)
    ref = build_reference(cfg, save=False)
    assert list(ref.index_set) == [MultiIndex.zero()] and ref.conditioned
    # with Lambda = {0} the estimator is the plain sample mean of u_h
    solver = FemSolver(cfg.field(), cfg.mesh())
    est, system = run_wls(IndexSet([MultiIndex.zero()]), cfg.J, 4000, 5, solver)
    assert system.G.tolist() == [[1.0]]
    U = solver.solve_values(np.random.default_rng(6).standard_normal((4000, cfg.J)))
    diff = est.coefficients[0] - U.mean(axis=0)
    se = math.sqrt(2.0 / 4000) * U.std(axis=0, ddof=1)
    assert np.all(np.abs(diff) < 4 * se)


def test_reference_gate_failure(tmp_path):
    cfg = small_cfg(tmp_path, n_ref=30, m_ref_factor=0)
    with pytest.raises(ExperimentError):
        build_reference(cfg, save=False)


def test_run_wls_independent_of_workers(tmp_path):
    cfg = small_cfg(tmp_path)
    solver = FemSolver(cfg.field(), cfg.mesh())
    from wls_lab.weights import build_lambda
    lam = build_lambda(12, cfg.rho(), cfg.J)
    a, _ = run_wls(lam, cfg.J, 5000, 9, solver, workers=1)
    b, _ = run_wls(lam, cfg.J, 5000, 9, solver, workers=3)
    assert a.to_bytes() == b.to_bytes()


def test_convergence_outputs_are_deterministic(tmp_path):
    r1 = run_convergence(small_cfg(tmp_path / "a"))
    r2 = run_convergence(small_cfg(tmp_path / "b", workers=3))
    for name in ("convergence.csv", "convergence.dat", "convergence_summary.json"):
        assert (tmp_path / "a" / "out" / name).read_bytes() == \
            (tmp_path / "b" / "out" / name).read_bytes()
    assert r1.csv().splitlines()[0] == "n,m,mean_error,stderr,failures"
    assert [row.n for row in r1.rows] == [3, 6, 12]
    assert set(r1.checks) == {"monotone_trend", "reference_self_consistency"}
    ref = WlsEstimator.load(tmp_path / "a" / "out" / "reference_0.est")
    assert len(ref.index_set) == 30


def test_degenerate_n_equal_to_reference_is_not_fitted(tmp_path):
    cfg = small_cfg(tmp_path, n_schedule=[3, 6, 12, 30], n_ref=30, mc_repetitions=1)
    ref = build_reference(cfg, save=False)
    res = convergence_study(cfg, ref, write=False)
    assert len(res.rows) == 4 and len(res.local_slopes) == 2
    assert "reference_self_consistency" not in res.checks


def test_fit_slope():
    n = np.array([10, 20, 40, 80])
    assert fit_slope(n, 3 * n**-0.5) == pytest.approx(-0.5, rel=1e-12)


def test_anisotropy_report(tmp_path):
    cfg = small_cfg(tmp_path, L=6, M=9, anisotropy_n=[1, 100, 1000])
    rep = anisotropy_report(cfg)
    assert all(v == 0 for v in rep.max_degrees[1].values())
    assert rep.max_degrees[1000]["psi_0_0"] > rep.max_degrees[1000]["psi_3_0"]
    assert rep.valid
    low = anisotropy_report(small_cfg(tmp_path, beta=0.125, L=6, M=9, anisotropy_n=[1000]),
                            write=False)
    assert rep.max_degrees[1000]["psi_0_0"] > low.max_degrees[1000]["psi_0_0"]
    assert (tmp_path / "out" / "anisotropy.csv").read_text().startswith("n,psi_0_0")


def test_section_symmetry_helper():
    e = MultiIndex.unit
    s = IndexSet([MultiIndex.zero(), e(2), e(3), e(2, 2)])
    assert section(s, 2, 3) == {(0, 0), (1, 0), (0, 1), (2, 0)}
    assert not section_is_symmetric(s, 2, 3)


def test_cli_roundtrip(tmp_path, capsys):
    prefix = tmp_path / "lam"
    assert cli.main(["build-set", "--beta", "0.5", "--levels", "2", "--n", "8",
                     "--output", str(prefix)]) == 0
    lam = IndexSet.from_text((tmp_path / "lam.txt").read_text())
    assert len(lam) == 8
    rows = (tmp_path / "lam.csv").read_text().splitlines()
    assert rows[0] == "index,xi" and rows[1] == ",1.0" and len(rows) == 9
    out = tmp_path / "s.csv"
    assert cli.main(["sample", "--set", str(tmp_path / "lam.txt"), "--J", "7", "--m", "5",
                     "--seed", "3", "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "y_1,y_2,y_3,y_4,y_5,y_6,y_7,w" and len(lines) == 6
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(small_cfg(tmp_path).dump())
    assert cli.main(["anisotropy", "--config", str(cfg_path)]) == 0
    assert cli.main(["reference", "--config", str(cfg_path)]) == 0
    assert cli.main(["converge", "--config", str(cfg_path), "--workers", "2"]) in (0, 2)
    assert cli.main(["converge", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_tie_class_split_breaks_symmetry():
    # at n = 40 the selection cut separates two same-level permutations that tie
    cfg = ExperimentConfig(beta=0.5, L=2, M=4, n_schedule=[3], n_ref=30)
    assert not anisotropy_report(cfg, [40], write=False).valid
    assert anisotropy_report(cfg, [50], write=False).valid
