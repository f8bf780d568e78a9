"""End-to-end studies wired together from the other modules.

A study is described by an INI config (sections [cost] or [kernel],
[bridge], [study], [output]) and executed by one of four runners:

* run_validate_cost: grid checks on the configured cost.
* run_solve_bridge:  potential solve, persisted as a (node, a_value) CSV.
* run_converge:      per-n kernel -> balance -> exact permanents ->
  determinant estimates, against the shared Fredholm limit; emits the
  convergence CSV and a fitted rate.
* run_balance_study: balancing diagnostics only (no permanents), with the
  scaled quantities that exhibit the decay rates of the perturbation.

Runners print human-readable tables and return the underlying records;
the CLI in :mod:`permlim.cli` maps their exceptions to exit codes.
"""

from __future__ import annotations

import configparser
import math
import os
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import balance as balance_mod
from . import bridge as bridge_mod
from . import cost as cost_mod
from . import grid as grid_mod
from . import permanent as permanent_mod
from . import spectral as spectral_mod
from .errors import ConfigError

CSV_HEADER = ("n,D_n,D_n_hat,L_n_scaled,mccullagh,fredholm_limit,err_Dn,"
              "err_ratio_mcc,h_norm_2n,h_norm_inf,sum_log,m_n,"
              "wall_ms_permanent,wall_ms_balance")

BALANCE_CSV_HEADER = ("n,h_norm_2n,h_norm_inf,sum_log,m_n,n_h_norm_2n,"
                      "sqrt_n_h_norm_inf,n_abs_sum_log,n2_abs_m_n,iterations,"
                      "residual,wall_ms_balance")

_EXACT_FLOOR = 1e-11  # below this the rate fit would measure rounding noise

_SECTIONS = {
    "cost": {"family", "beta", "path", "expression", "smoothness",
             "validate_grid", "validate_tol"},
    "kernel": {"kind", "eps", "path"},
    "bridge": {"m", "tol", "max_iter", "damping"},
    "study": {"n_list", "permanent_cap", "balance_tol", "balance_max_iter",
              "nystrom_m", "eig_cutoff", "refinement_tol", "workers", "method"},
    "output": {"csv_path", "eigen_dump"},
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed study configuration with defaults applied."""

    cost: cost_mod.CostFunction | None = None
    validate_grid: int = 100
    validate_tol: float = 1e-9
    kernel_source: bridge_mod.DensitySource | None = None
    bridge_m: int = 400
    bridge_tol: float = 1e-12
    bridge_max_iter: int = 500
    bridge_damping: float = 1.0
    n_list: tuple[int, ...] | None = None
    permanent_cap: int = permanent_mod.DEFAULT_CAP
    balance_tol: float = 1e-12
    balance_max_iter: int = 200
    nystrom_m: int = 128
    eig_cutoff: float = spectral_mod.DEFAULT_EIG_CUTOFF
    refinement_tol: float = spectral_mod.DEFAULT_REFINEMENT_TOL
    workers: int = 1
    method: str = "ryser"
    csv_path: str | None = None
    eigen_dump: bool = False


@dataclass(frozen=True)
class ConvergenceRecord:
    """One row of the convergence CSV; field order matches the header.

    L_n_scaled is L_n * exp(n Gamma0) and applies to bridge sources only;
    synthetic kernels have no cost, so the field is nan there. Wall-clock
    fields are informational and not reproducible between runs.
    """

    n: int
    D_n: float
    D_n_hat: float
    L_n_scaled: float
    mccullagh: float
    fredholm_limit: float
    err_Dn: float
    err_ratio_mcc: float
    h_norm_2n: float
    h_norm_inf: float
    sum_log: float
    m_n: float
    wall_ms_permanent: float
    wall_ms_balance: float


@dataclass(frozen=True)
class BalanceStudyRecord:
    """One row of the balance-study CSV; field order matches its header."""

    n: int
    h_norm_2n: float
    h_norm_inf: float
    sum_log: float
    m_n: float
    n_h_norm_2n: float
    sqrt_n_h_norm_inf: float
    n_abs_sum_log: float
    n2_abs_m_n: float
    iterations: int
    residual: float
    wall_ms_balance: float


def load_config(path) -> RunConfig:
    """Parse an INI study config, rejecting unknown sections and keys."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path} not found or unreadable")
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(parser[section]) - _SECTIONS[section]
        if unknown:
            raise ConfigError(
                f"unknown keys {sorted(unknown)} in section [{section}]")

    kwargs = {}
    if parser.has_section("cost"):
        kwargs["cost"] = _build_cost(parser["cost"], path)
        kwargs["validate_grid"] = _get(parser["cost"], "validate_grid", int, 100)
        kwargs["validate_tol"] = _get(parser["cost"], "validate_tol", float, 1e-9)
    if parser.has_section("kernel"):
        kwargs["kernel_source"] = _build_kernel(parser["kernel"], path)
    if parser.has_section("bridge"):
        sec = parser["bridge"]
        kwargs["bridge_m"] = _get(sec, "m", int, 400)
        kwargs["bridge_tol"] = _get(sec, "tol", float, 1e-12)
        kwargs["bridge_max_iter"] = _get(sec, "max_iter", int, 500)
        kwargs["bridge_damping"] = _get(sec, "damping", float, 1.0)
    if parser.has_section("study"):
        sec = parser["study"]
        if "n_list" in sec:
            kwargs["n_list"] = _parse_n_list(sec["n_list"])
        kwargs["permanent_cap"] = _get(sec, "permanent_cap", int,
                                       permanent_mod.DEFAULT_CAP)
        kwargs["balance_tol"] = _get(sec, "balance_tol", float, 1e-12)
        kwargs["balance_max_iter"] = _get(sec, "balance_max_iter", int, 200)
        kwargs["nystrom_m"] = _get(sec, "nystrom_m", int, 128)
        kwargs["eig_cutoff"] = _get(sec, "eig_cutoff", float,
                                    spectral_mod.DEFAULT_EIG_CUTOFF)
        kwargs["refinement_tol"] = _get(sec, "refinement_tol", float,
                                        spectral_mod.DEFAULT_REFINEMENT_TOL)
        kwargs["workers"] = _get(sec, "workers", int, 1)
        kwargs["method"] = sec.get("method", "ryser").strip()
        if kwargs["method"] not in permanent_mod.METHODS:
            raise ConfigError(f"unknown permanent method {kwargs['method']!r}")
    if parser.has_section("output"):
        sec = parser["output"]
        if "csv_path" in sec:
            kwargs["csv_path"] = sec["csv_path"].strip()
        kwargs["eigen_dump"] = sec.getboolean("eigen_dump", fallback=False)
    return RunConfig(**kwargs)


def run_validate_cost(config: RunConfig):
    """Validate the configured cost; returns (report, exit code 0 or 2)."""
    if config.cost is None:
        raise ConfigError("validate-cost requires a [cost] section")
    report = cost_mod.validate_cost(config.cost, config.validate_grid,
                                    config.validate_tol)
    print(f"cost {config.cost.label}: grid {report.grid_size}, "
          f"tol {config.validate_tol:g}")
    for check in report.checks:
        print(f"  {check.name}: {check.status} "
              f"(max violation {check.max_violation:.3e})")
    return report, (2 if report.failed else 0)


def run_solve_bridge(config: RunConfig) -> bridge_mod.PotentialSolution:
    """Solve the potential equation and persist (node, a_value) rows."""
    if config.cost is None:
        raise ConfigError("solve-bridge requires a [cost] section")
    if config.csv_path is None:
        raise ConfigError("solve-bridge requires csv_path in [output]")
    solution = bridge_mod.solve_potential(
        config.cost, m=config.bridge_m, tol=config.bridge_tol,
        max_iter=config.bridge_max_iter, damping=config.bridge_damping)
    with open(config.csv_path, "w") as fh:
        fh.write("node,a_value\n")
        for node, a in zip(solution.nodes, solution.a_values):
            fh.write(f"{float(node)!r},{float(a)!r}\n")
    print(f"gamma0 = {bridge_mod.gamma0(solution)!r}")
    print(f"residual = {solution.final_residual:.3e} "
          f"after {solution.iterations} iterations")
    return solution


def run_converge(config: RunConfig) -> list[ConvergenceRecord]:
    """Full study: kernels, balancing, exact permanents, determinant limits."""
    if config.n_list is None:
        raise ConfigError("converge requires n_list in [study]")
    if config.csv_path is None:
        raise ConfigError("converge requires csv_path in [output]")
    over = [n for n in config.n_list if n > config.permanent_cap]
    if over:
        raise ConfigError(
            f"n_list entries {over} exceed permanent_cap={config.permanent_cap}")
    source, solution = _build_source(config)

    fredholm = spectral_mod.fredholm_limit(
        source, config.nystrom_m, eig_cutoff=config.eig_cutoff,
        refinement_tol=config.refinement_tol)
    if config.eigen_dump:
        _dump_eigenvalues(config.csv_path, fredholm.eigenvalues)
    g0 = bridge_mod.gamma0(solution) if solution is not None else math.nan

    records: list[ConvergenceRecord] = []
    for n in config.n_list:
        try:
            records.append(_converge_one(config, source, solution, g0,
                                         fredholm.fredholm_limit, n))
        except Exception:
            _write_csv(config.csv_path, CSV_HEADER, records,
                       aborted_at=n)
            raise
    _write_csv(config.csv_path, CSV_HEADER, records)

    for r in records:
        print(f"n={r.n:4d}  D_n={r.D_n:.12g}  D_n_hat={r.D_n_hat:.12g}  "
              f"mccullagh={r.mccullagh:.12g}  err_Dn={r.err_Dn:.3e}")
    print(f"fredholm_limit = {fredholm.fredholm_limit!r} "
          f"(m={config.nystrom_m}, converged={fredholm.converged})")
    alpha, used = fit_rate(config.n_list, [r.err_Dn for r in records])
    if alpha is None:
        print("rate: exact (all errors at or below the numerical floor)")
    else:
        print(f"fitted rate alpha = {alpha:.3f} (fit on n in {list(used)})")
    return records


def run_balance_study(config: RunConfig) -> list[BalanceStudyRecord]:
    """Balancing diagnostics across n_list, without any permanents."""
    if config.n_list is None:
        raise ConfigError("balance-study requires n_list in [study]")
    if config.csv_path is None:
        raise ConfigError("balance-study requires csv_path in [output]")
    source, _ = _build_source(config)

    records: list[BalanceStudyRecord] = []
    for n in config.n_list:
        try:
            K = grid_mod.sample_kernel(source, n)
            t0 = time.perf_counter()
            res = balance_mod.balance_fixed_point(
                K, tol=config.balance_tol, max_iter=config.balance_max_iter)
            wall_ms = 1e3 * (time.perf_counter() - t0)
            d = balance_mod.balance_diagnostics(res)
        except Exception:
            _write_csv(config.csv_path, BALANCE_CSV_HEADER, records, aborted_at=n)
            raise
        records.append(BalanceStudyRecord(
            n=n, h_norm_2n=d.norm_2n_h, h_norm_inf=d.norm_inf_h,
            sum_log=d.sum_log, m_n=d.m_n,
            n_h_norm_2n=n * d.norm_2n_h,
            sqrt_n_h_norm_inf=math.sqrt(n) * d.norm_inf_h,
            n_abs_sum_log=n * abs(d.sum_log),
            n2_abs_m_n=n * n * abs(d.m_n),
            iterations=res.iterations, residual=res.residual,
            wall_ms_balance=wall_ms))
    _write_csv(config.csv_path, BALANCE_CSV_HEADER, records)

    for r in records:
        print(f"n={r.n:5d}  n*|h|_2n={r.n_h_norm_2n:.6g}  "
              f"sqrt(n)*|h|_inf={r.sqrt_n_h_norm_inf:.6g}  "
              f"n*|sum_log|={r.n_abs_sum_log:.6g}  n^2*|m_n|={r.n2_abs_m_n:.6g}")
    for name in ("n_h_norm_2n", "sqrt_n_h_norm_inf", "n_abs_sum_log",
                 "n2_abs_m_n"):
        vals = [getattr(r, name) for r in records]
        print(f"{name} max/min ratio = {_ratio(vals):.6g}")
    return records


def fit_rate(n_list, errors):
    """Least-squares exponent of err ~ C n^-alpha on a log-log scale.

    Returns (alpha, n values used) or (None, ()) when every error sits at
    the numerical floor (the decay is then unmeasurable) or fewer than two
    usable points remain. Only n at or above the median of n_list enter
    the fit: small-n rows carry preasymptotic constants that bias alpha.
    """
    pairs = list(zip(n_list, errors))
    if all(e <= _EXACT_FLOOR for _, e in pairs):
        return None, ()
    med = statistics.median(n_list)
    use = [(n, e) for n, e in pairs if n >= med and e > 0.0]
    if len(use) < 2:
        use = [(n, e) for n, e in pairs if e > 0.0]
    if len(use) < 2:
        return None, ()
    ln = np.log([n for n, _ in use])
    le = np.log([e for _, e in use])
    slope = np.polyfit(ln, le, 1)[0]
    return float(-slope), tuple(n for n, _ in use)


def _converge_one(config, source, solution, g0, fredholm_value, n):
    K = grid_mod.sample_kernel(source, n)
    t0 = time.perf_counter()
    res = balance_mod.balance_fixed_point(
        K, tol=config.balance_tol, max_iter=config.balance_max_iter)
    wall_balance = 1e3 * (time.perf_counter() - t0)
    d = balance_mod.balance_diagnostics(res)

    t0 = time.perf_counter()
    Dn = permanent_mod.compute_Dn(K, method=config.method,
                                  cap=config.permanent_cap,
                                  workers=config.workers)
    Dh = permanent_mod.compute_Dn_hat(res, method=config.method,
                                      cap=config.permanent_cap,
                                      workers=config.workers)
    if solution is not None:
        Ln = permanent_mod.compute_Ln(config.cost, n, method=config.method,
                                      cap=config.permanent_cap,
                                      workers=config.workers)
        ln_scaled = Ln.value * math.exp(n * g0)
    else:
        ln_scaled = math.nan
    wall_perm = 1e3 * (time.perf_counter() - t0)

    mcc = spectral_mod.mccullagh_estimate(res.balanced / n)
    return ConvergenceRecord(
        n=n, D_n=Dn.value, D_n_hat=Dh.value, L_n_scaled=ln_scaled,
        mccullagh=mcc, fredholm_limit=fredholm_value,
        err_Dn=abs(Dn.value - fredholm_value),
        err_ratio_mcc=abs(mcc / Dh.value - 1.0),
        h_norm_2n=d.norm_2n_h, h_norm_inf=d.norm_inf_h, sum_log=d.sum_log,
        m_n=d.m_n, wall_ms_permanent=wall_perm, wall_ms_balance=wall_balance)


def _build_source(config: RunConfig):
    """The configured density source plus the potential solution if any."""
    if config.cost is not None and config.kernel_source is not None:
        raise ConfigError("config has both [cost] and [kernel]; pick one source")
    if config.kernel_source is not None:
        return config.kernel_source, None
    if config.cost is None:
        raise ConfigError("config needs a [cost] or a [kernel] section")
    solution = bridge_mod.solve_potential(
        config.cost, m=config.bridge_m, tol=config.bridge_tol,
        max_iter=config.bridge_max_iter, damping=config.bridge_damping)
    return bridge_mod.bridge_source(solution), solution


def _build_cost(sec, path) -> cost_mod.CostFunction:
    family = sec.get("family", "").strip()
    try:
        if family == "quadratic":
            return cost_mod.quadratic_cost(_get(sec, "beta", float, 1.0))
        if family == "absolute":
            return cost_mod.absolute_cost(_get(sec, "beta", float, 1.0))
        if family == "tabulated":
            if "path" not in sec:
                raise ConfigError("tabulated cost requires a path key")
            return cost_mod.load_tabulated_cost(
                _resolve(path, sec["path"].strip()))
        if family == "custom-expression":
            if "expression" not in sec:
                raise ConfigError("custom-expression cost requires expression")
            return cost_mod.expression_cost(
                sec["expression"].strip(), sec.get("smoothness", "C2").strip())
    except (ValueError, OSError) as exc:
        raise ConfigError(f"invalid [cost] section: {exc}") from exc
    raise ConfigError(f"unknown cost family {family!r} in [cost] section")


def _build_kernel(sec, path) -> bridge_mod.DensitySource:
    kind = sec.get("kind", "").strip()
    try:
        if kind == "constant":
            return bridge_mod.constant_source()
        if kind == "cosine":
            if "eps" not in sec:
                raise ConfigError("cosine kernel requires eps")
            return bridge_mod.cosine_source(float(sec["eps"]))
        if kind == "tabulated":
            if "path" not in sec:
                raise ConfigError("tabulated kernel requires a path key")
            from .grid import load_matrix
            return bridge_mod.tabulated_source(
                load_matrix(_resolve(path, sec["path"].strip())))
    except (ValueError, OSError) as exc:
        raise ConfigError(f"invalid [kernel] section: {exc}") from exc
    raise ConfigError(f"unknown kernel kind {kind!r} in [kernel] section")


def _get(sec, key, conv, default):
    if key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {sec[key]!r}") from exc


def _parse_n_list(text) -> tuple[int, ...]:
    try:
        ns = tuple(int(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad n_list: {text!r}") from exc
    if not ns or any(n < 1 for n in ns):
        raise ConfigError("n_list must contain positive integers")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("n_list must be strictly increasing")
    return ns


def _resolve(config_path, value):
    """Paths in a config file are relative to the file, not the cwd."""
    if os.path.isabs(value):
        return value
    return os.path.join(os.path.dirname(os.path.abspath(config_path)), value)


def _write_csv(csv_path, header, records, aborted_at=None):
    with open(csv_path, "w") as fh:
        fh.write(header + "\n")
        for r in records:
            fh.write(",".join(_fmt(getattr(r, name))
                              for name in header.split(",")) + "\n")
        if aborted_at is not None:
            fh.write(f"# aborted at n={aborted_at}\n")


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _dump_eigenvalues(csv_path, eigenvalues) -> None:
    stem, _ = os.path.splitext(csv_path)
    with open(stem + ".eigs", "w") as fh:
        for lam in eigenvalues:
            fh.write(f"{float(lam)!r}\n")


def _ratio(values) -> float:
    hi, lo = max(values), min(values)
    if lo > 0.0:
        return hi / lo
    return math.inf if hi > 0.0 else 0.0
