import math
import os

import numpy as np
import pytest

import permlim.lab as lab_module
from permlim import (BalanceError, ConfigError, RunConfig, fit_rate,
                     load_config, load_matrix, run_balance_study,
                     run_converge, run_solve_bridge, run_validate_cost)
from permlim.cli import main


def _write_config(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def constant_converge_cfg(tmp_path):
    return _write_config(tmp_path / "study.ini", f"""
[kernel]
kind = constant

[study]
n_list = 2 4 8
nystrom_m = 64

[output]
csv_path = {tmp_path / "out.csv"}
""")


def test_load_config_defaults(tmp_path):
    cfg = load_config(_write_config(tmp_path / "c.ini", """
[cost]
family = quadratic
beta = 2.5
"""))
    assert cfg.cost.params == (2.5,)
    assert cfg.bridge_m == 400
    assert cfg.balance_tol == 1e-12
    assert cfg.workers == 1
    assert cfg.method == "ryser"
    assert cfg.n_list is None
    assert cfg.csv_path is None
    assert cfg.eigen_dump is False


def test_load_config_full_roundtrip(tmp_path):
    cfg = load_config(_write_config(tmp_path / "c.ini", f"""
[kernel]
kind = cosine
eps = 0.25

[study]
n_list = 2, 4, 6
permanent_cap = 20
balance_tol = 1e-10
nystrom_m = 96
workers = 3
method = glynn

[output]
csv_path = {tmp_path / "out.csv"}
eigen_dump = yes
"""))
    assert cfg.kernel_source.kind == "synthetic-cosine"
    assert cfg.n_list == (2, 4, 6)
    assert cfg.permanent_cap == 20
    assert cfg.balance_tol == 1e-10
    assert cfg.nystrom_m == 96
    assert cfg.workers == 3
    assert cfg.method == "glynn"
    assert cfg.eigen_dump is True


def test_load_config_relative_paths(tmp_path):
    (tmp_path / "table.txt").write_text("2 0 1 1 0")
    cfg = load_config(_write_config(tmp_path / "c.ini", """
[cost]
family = tabulated
path = table.txt
"""))
    assert cfg.cost.family == "tabulated"


@pytest.mark.parametrize("text,match", [
    ("[banana]\nkind = constant\n", "unknown config section"),
    ("[kernel]\nkind = constant\nfruit = 3\n", "unknown keys"),
    ("[kernel]\nkind = constant\n\n[study]\nn_list = 4 2\n",
     "strictly increasing"),
    ("[kernel]\nkind = constant\n\n[study]\nn_list = 0 2\n", "positive"),
    ("[kernel]\nkind = constant\n\n[study]\nmethod = cofactor\n",
     "unknown permanent method"),
    ("[kernel]\nkind = constant\n\n[study]\nworkers = many\n", "bad value"),
    ("[cost]\nfamily = sinister\n", "unknown cost family"),
    ("[cost]\nfamily = tabulated\n", "path"),
    ("[kernel]\nkind = cubic\n", "unknown kernel kind"),
    ("[kernel]\nkind = cosine\n", "eps"),
])
def test_load_config_rejects(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(_write_config(tmp_path / "c.ini", text))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "absent.ini"))


def test_both_sources_rejected(tmp_path):
    cfg = load_config(_write_config(tmp_path / "c.ini", f"""
[cost]
family = quadratic

[kernel]
kind = constant

[study]
n_list = 2

[output]
csv_path = {tmp_path / "o.csv"}
"""))
    with pytest.raises(ConfigError, match="pick one source"):
        run_converge(cfg)


def test_validate_cost_runner_pass(tmp_path, capsys):
    cfg = load_config(_write_config(tmp_path / "c.ini", """
[cost]
family = quadratic
validate_grid = 40
"""))
    report, code = run_validate_cost(cfg)
    assert code == 0
    assert not report.failed
    out = capsys.readouterr().out
    for name in ("finiteness", "nonnegativity", "symmetry", "diagonal",
                 "reflection"):
        assert name in out
    assert out.count("pass") == 5


def test_validate_cost_runner_fail(tmp_path, capsys):
    (tmp_path / "t.txt").write_text("2 0 1 0.5 0")
    cfg = load_config(_write_config(tmp_path / "c.ini", """
[cost]
family = tabulated
path = t.txt
"""))
    _, code = run_validate_cost(cfg)
    assert code == 2
    assert "fail" in capsys.readouterr().out


def test_validate_cost_requires_cost_section(tmp_path):
    cfg = load_config(_write_config(tmp_path / "c.ini",
                                    "[kernel]\nkind = constant\n"))
    with pytest.raises(ConfigError, match="cost"):
        run_validate_cost(cfg)


def test_solve_bridge_runner(tmp_path, capsys):
    csv = tmp_path / "potential.csv"
    cfg = load_config(_write_config(tmp_path / "c.ini", f"""
[cost]
family = quadratic

[bridge]
m = 64

[output]
csv_path = {csv}
"""))
    solution = run_solve_bridge(cfg)
    lines = csv.read_text().splitlines()
    assert lines[0] == "node,a_value"
    assert len(lines) == 65
    nodes = [float(ln.split(",")[0]) for ln in lines[1:]]
    values = [float(ln.split(",")[1]) for ln in lines[1:]]
    np.testing.assert_array_equal(nodes, solution.nodes)
    np.testing.assert_array_equal(values, solution.a_values)
    out = capsys.readouterr().out
    assert "gamma0" in out and "residual" in out


def test_converge_constant_kernel(constant_converge_cfg, capsys):
    cfg = load_config(constant_converge_cfg)
    records = run_converge(cfg)
    assert [r.n for r in records] == [2, 4, 8]
    for r in records:
        assert r.D_n == pytest.approx(1.0, abs=1e-11)
        assert r.D_n_hat == pytest.approx(1.0, abs=1e-11)
        assert r.fredholm_limit == pytest.approx(1.0, abs=1e-11)
        assert math.isnan(r.L_n_scaled)  # synthetic kernel has no cost
    out = capsys.readouterr().out
    assert "rate: exact" in out
    csv_lines = open(cfg.csv_path).read().splitlines()
    assert csv_lines[0] == lab_module.CSV_HEADER
    assert len(csv_lines) == 4


def test_converge_cosine_with_eigen_dump(tmp_path):
    csv = tmp_path / "cosine.csv"
    cfg = load_config(_write_config(tmp_path / "c.ini", f"""
[kernel]
kind = cosine
eps = 0.5

[study]
n_list = 4 8
nystrom_m = 64

[output]
csv_path = {csv}
eigen_dump = true
"""))
    records = run_converge(cfg)
    limit = 2.0 / math.sqrt(3.0)
    assert records[0].fredholm_limit == pytest.approx(limit, abs=1e-3)
    assert records[1].err_Dn < records[0].err_Dn
    eigs = [float(t) for t in open(tmp_path / "cosine.eigs").read().split()]
    assert len(eigs) == 64
    assert eigs == sorted(eigs)
    assert max(abs(e) for e in eigs) == pytest.approx(0.5, abs=1e-3)


def test_converge_bridge_source_scaled_product(tmp_path, capsys):
    csv = tmp_path / "quad.csv"
    cfg = load_config(_write_config(tmp_path / "c.ini", f"""
[cost]
family = quadratic

[bridge]
m = 200

[study]
n_list = 4 8
nystrom_m = 64

[output]
csv_path = {csv}
"""))
    records = run_converge(cfg)
    for r in records:
        assert math.isfinite(r.L_n_scaled)
        # scaled raw product and the balanced permanent approach each other
        assert abs(r.L_n_scaled / r.D_n - 1.0) < 0.2
    assert "fitted rate alpha" in capsys.readouterr().out


def test_converge_rejects_n_above_cap(tmp_path):
    cfg = load_config(_write_config(tmp_path / "c.ini", f"""
[kernel]
kind = constant

[study]
n_list = 2 30

[output]
csv_path = {tmp_path / "o.csv"}
"""))
    with pytest.raises(ConfigError, match="exceed permanent_cap"):
        run_converge(cfg)


def test_converge_abort_writes_partial_csv(tmp_path, monkeypatch):
    csv = tmp_path / "abort.csv"
    cfg_path = _write_config(tmp_path / "c.ini", f"""
[kernel]
kind = cosine
eps = 0.5

[study]
n_list = 2 4 8
nystrom_m = 64

[output]
csv_path = {csv}
""")
    real = lab_module.balance_mod.balance_fixed_point

    def explode(K, **kwargs):
        if getattr(K, "n", None) == 8:
            raise BalanceError("forced failure", residual=1.0, iterations=3)
        return real(K, **kwargs)

    monkeypatch.setattr(lab_module.balance_mod, "balance_fixed_point", explode)
    with pytest.raises(BalanceError):
        run_converge(load_config(cfg_path))
    lines = csv.read_text().splitlines()
    assert lines[0] == lab_module.CSV_HEADER
    assert len(lines) == 4  # header + n=2 + n=4 + abort marker
    assert lines[-1] == "# aborted at n=8"
    assert main(["converge", "--config", cfg_path]) == 4


def test_balance_study_constant(tmp_path, capsys):
    csv = tmp_path / "bal.csv"
    cfg = load_config(_write_config(tmp_path / "c.ini", f"""
[kernel]
kind = constant

[study]
n_list = 2 4 8

[output]
csv_path = {csv}
"""))
    records = run_balance_study(cfg)
    for r in records:
        assert r.h_norm_2n == 0.0
        assert r.n_h_norm_2n == 0.0
        assert r.n2_abs_m_n == 0.0
        assert r.iterations == 1
    lines = csv.read_text().splitlines()
    assert lines[0] == lab_module.BALANCE_CSV_HEADER
    assert "max/min ratio" in capsys.readouterr().out


def test_balance_study_cosine_scaled_columns_bounded(tmp_path):
    cfg = load_config(_write_config(tmp_path / "c.ini", f"""
[kernel]
kind = cosine
eps = 0.5

[study]
n_list = 50 100 200

[output]
csv_path = {tmp_path / "bal.csv"}
"""))
    records = run_balance_study(cfg)
    for name in ("n_h_norm_2n", "sqrt_n_h_norm_inf", "n_abs_sum_log",
                 "n2_abs_m_n"):
        vals = [getattr(r, name) for r in records]
        assert max(vals) / min(vals) < 8.0


def test_fit_rate_recovers_exponent():
    n_list = [10, 20, 40, 80, 160]
    errors = [3.0 * n ** -1.3 for n in n_list]
    alpha, used = fit_rate(n_list, errors)
    assert alpha == pytest.approx(1.3, abs=1e-10)
    assert used == (40, 80, 160)


def test_fit_rate_exact_floor():
    assert fit_rate([2, 4, 8], [1e-14, 1e-13, 1e-12]) == (None, ())


def test_fit_rate_single_usable_point():
    assert fit_rate([2, 4], [0.0, 0.0]) == (None, ())


def test_runconfig_is_frozen():
    cfg = RunConfig()
    with pytest.raises(AttributeError):
        cfg.workers = 4


def test_cli_exit_codes(tmp_path, constant_converge_cfg, capsys):
    assert main(["converge", "--config", constant_converge_cfg]) == 0
    assert main(["balance-study", "--config", constant_converge_cfg]) == 0
    assert main(["converge", "--config", str(tmp_path / "nope.ini")]) == 1
    capsys.readouterr()


def test_cli_validate_cost_failure_code(tmp_path, capsys):
    (tmp_path / "t.txt").write_text("2 0 1 0.5 0")
    cfg = _write_config(tmp_path / "c.ini", """
[cost]
family = tabulated
path = t.txt
""")
    assert main(["validate-cost", "--config", cfg]) == 2
    capsys.readouterr()


def test_cli_bridge_failure_code(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.ini", f"""
[cost]
family = quadratic
beta = 40

[bridge]
m = 32
max_iter = 2

[output]
csv_path = {tmp_path / "o.csv"}
""")
    assert main(["solve-bridge", "--config", cfg]) == 3
    assert "permlim:" in capsys.readouterr().err


def test_cli_negative_kernel_maps_to_validation_code(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.ini", f"""
[kernel]
kind = cosine
eps = 0.999

[study]
n_list = 2 8
nystrom_m = 64

[output]
csv_path = {tmp_path / "o.csv"}
""")
    assert main(["converge", "--config", cfg]) == 2
    capsys.readouterr()
