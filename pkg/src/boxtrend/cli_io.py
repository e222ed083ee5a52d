"""Data ingestion, configuration, result export and the command-line entry point.

Config files are flat ``key = value`` text (``#`` starts a comment); command
line ``--set key=value`` overrides win. All result tables are CSV with
numbers written at 17 significant digits so they parse back exactly.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import logging
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, fields
from importlib import metadata
from pathlib import Path

import numpy as np

from .diagnostics import efficiency_report, posterior_summary
from .gaussian import ucar_trend_system
from .models import (
    BoundedHyper,
    BoundedState,
    DataError,
    UcArHyper,
    UcArState,
    bounded_simulate_data,
    transform_inflation,
    truncated_rw_draw,
    ucar_simulate_data,
)
from .distributions import RngStream
from .qp import BoxQp, solve_box_qp
from .sampler import ArmhConfig, ChainTrace, RunConfig, Strategy, run_chain

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
_QUARTER = re.compile(r"^(\d{4})Q([1-4])$")


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    return "%.17g" % x


# ---------------------------------------------------------------- data


@dataclass
class CpiSeries:
    dates: list[str]
    levels: np.ndarray

    def __len__(self):
        return len(self.dates)

    def inflation(self) -> tuple[list[str], np.ndarray]:
        """Annualized quarterly inflation, dated by the later quarter."""
        return self.dates[1:], transform_inflation(self.levels)


def _quarter_index(label: str) -> int | None:
    m = _QUARTER.match(label)
    return None if m is None else 4 * int(m.group(1)) + int(m.group(2)) - 1


def quarter_label(index: int) -> str:
    return f"{index // 4}Q{index % 4 + 1}"


def load_cpi_csv(path) -> CpiSeries:
    """Read a ``date,cpi`` file; errors name the offending line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from None
    lines = text.splitlines()
    if not lines or [c.strip().lower() for c in lines[0].split(",")] != ["date", "cpi"]:
        raise DataError(f"{path}:1: expected header 'date,cpi'")
    dates, levels, prev = [], [], None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
        label, raw = parts
        q = _quarter_index(label)
        if q is None:
            raise DataError(f"{path}:{lineno}: bad quarter label {label!r} (want YYYYQn)")
        try:
            level = float(raw)
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad cpi value {raw!r}") from None
        if not (math.isfinite(level) and level > 0):
            raise DataError(f"{path}:{lineno}: cpi level must be positive, got {raw}")
        if prev is not None and q <= prev:
            raise DataError(f"{path}:{lineno}: date {label} is not after {quarter_label(prev)}")
        prev = q
        dates.append(label)
        levels.append(level)
    if len(dates) < 2:
        raise DataError(f"{path}: need at least two observations")
    return CpiSeries(dates, np.array(levels))


def write_cpi_csv(path, series: CpiSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "cpi"])
        for d, v in zip(series.dates, series.levels):
            w.writerow([d, fmt(v)])


# ---------------------------------------------------------------- config


_UCAR_KEYS = {f.name for f in fields(UcArHyper)}
_BOUNDED_KEYS = {f.name for f in fields(BoundedHyper)}
_RUN_KEYS = {"model", "method", "n_draws", "burn_in", "seed", "data", "pi0_policy", "precision_at",
             "block_size", "lam", "max_ar_draws", "start", "end", "out"}
# a_tau/b_tau serve both models; the bounded-only keys go to BoundedHyper
KNOWN_KEYS = _RUN_KEYS | _UCAR_KEYS | _BOUNDED_KEYS


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_config_text(text, str(path))


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        out[key] = value
    return out


def _num(cfg, key, cast=float):
    try:
        return cast(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {cfg[key]!r}") from None


def build_run_config(cfg: dict[str, str], strategy: str | None = None) -> RunConfig:
    """Resolve a flat key-value mapping into a RunConfig."""
    model = cfg.get("model")
    if model not in ("ucar", "bounded"):
        raise ConfigError(f"model must be 'ucar' or 'bounded', got {model!r}")
    kw = {"model": model}
    method = strategy or cfg.get("method", "mode")
    try:
        kw["strategy"] = Strategy(method)
    except ValueError:
        raise ConfigError(f"method must be 'mode' or 'quadprog', got {method!r}") from None
    for key in ("n_draws", "burn_in", "seed", "block_size"):
        if key in cfg:
            kw[key] = _num(cfg, key, int)
    for key in ("pi0_policy", "precision_at"):
        if key in cfg:
            kw[key] = cfg[key]
    armh = {}
    if "lam" in cfg:
        armh["lam"] = _num(cfg, "lam")
    if "max_ar_draws" in cfg:
        armh["max_ar_draws"] = _num(cfg, "max_ar_draws", int)
    try:
        if armh:
            kw["armh"] = ArmhConfig(**armh)
        if model == "ucar":
            kw["ucar"] = UcArHyper(**{k: _num(cfg, k) for k in _UCAR_KEYS if k in cfg})
            if "a_tau" in cfg:
                kw["ucar_a_tau"] = _num(cfg, "a_tau")
            if "b_tau" in cfg:
                kw["ucar_b_tau"] = _num(cfg, "b_tau")
        else:
            missing = [k for k in ("a_tau", "b_tau") if k not in cfg]
            if missing:
                raise ConfigError(f"bounded model needs {', '.join(missing)}")
            kw["bounded"] = BoundedHyper(**{k: _num(cfg, k) for k in _BOUNDED_KEYS if k in cfg})
        return RunConfig(**kw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _window(series: CpiSeries, cfg: dict[str, str]) -> CpiSeries:
    """Restrict to ``start``..``end`` quarter labels (inclusive) when given."""
    idx = [_quarter_index(d) for d in series.dates]
    lo = hi = None
    for key in ("start", "end"):
        if key in cfg and _quarter_index(cfg[key]) is None:
            raise ConfigError(f"{key}: bad quarter label {cfg[key]!r}")
    if "start" in cfg:
        lo = _quarter_index(cfg["start"])
    if "end" in cfg:
        hi = _quarter_index(cfg["end"])
    keep = [i for i, q in enumerate(idx) if (lo is None or q >= lo) and (hi is None or q <= hi)]
    if len(keep) < 2:
        raise DataError("sample window leaves fewer than two observations")
    return CpiSeries([series.dates[i] for i in keep], series.levels[keep])


def load_inflation(cfg: dict[str, str]) -> tuple[list[str], np.ndarray]:
    if "data" not in cfg:
        raise ConfigError("config needs a 'data' path")
    return _window(load_cpi_csv(cfg["data"]), cfg).inflation()


# ---------------------------------------------------------------- outputs


def write_trace(path, trace: ChainTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace.names)
        for row in trace.draws:
            w.writerow([fmt(v) for v in row])


def read_trace(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def write_summary(path, trace: ChainTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "mean", "q05", "q95"])
        for r in posterior_summary(trace):
            w.writerow([r.name, fmt(r.mean), fmt(r.q05), fmt(r.q95)])


def write_efficiency(path, trace: ChainTrace) -> None:
    rep = efficiency_report(trace)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "ineff_factor"])
        for name, f in rep.factors.items():
            w.writerow([name, fmt(f)])
        w.writerow([])
        w.writerow(["block", "min", "q1", "median", "q3", "max"])
        for block, five in rep.blocks.items():
            w.writerow([block] + [fmt(v) for v in five])


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for k, v in entries.items():
            fh.write(f"{k} = {v}\n")


def _manifest(command, cfg: dict[str, str], run: RunConfig, wall: float, traces: dict) -> dict:
    m = {"command": command, "version": _version(),
         "finished": datetime.datetime.now().isoformat(timespec="seconds"),
         "wall_seconds": f"{wall:.3f}"}
    m.update({f"config.{k}": v for k, v in sorted(cfg.items())})
    flat = asdict(run)
    for k in sorted(flat):
        v = flat[k]
        if isinstance(v, dict):
            for kk in sorted(v):
                m[f"resolved.{k}.{kk}"] = v[kk]
        else:
            m[f"resolved.{k}"] = v.value if isinstance(v, Strategy) else v
    for label, tr in traces.items():
        for block, st in tr.stats.items():
            pre = f"{label}.{block}" if label else block
            m[f"{pre}.acceptance_rate"] = fmt(st.acceptance_rate)
            m[f"{pre}.mean_ar_draws"] = fmt(st.mean_ar_draws)
            m[f"{pre}.ar_exhausted"] = st.ar_exhausted
            m[f"{pre}.proposal_fallbacks"] = st.proposal_fallbacks
    return m


# ---------------------------------------------------------------- commands


def _resolve(args) -> dict[str, str]:
    cfg = load_config(args.config)
    cfg.update(parse_overrides(args.set))
    return cfg


def cmd_run(args) -> int:
    cfg = _resolve(args)
    run = build_run_config(cfg)
    _, y = load_inflation(cfg)
    out = Path(args.out or cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    trace = run_chain(run, y)
    wall = time.perf_counter() - t0
    write_trace(out / "trace.csv", trace)
    write_summary(out / "summary.csv", trace)
    write_efficiency(out / "efficiency.csv", trace)
    write_manifest(out / "manifest.txt", _manifest("run", cfg, run, wall, {"": trace}))
    print(f"wrote {out}/trace.csv, summary.csv, efficiency.csv, manifest.txt")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _resolve(args)
    runs = {s: build_run_config(cfg, s.value) for s in Strategy}
    dates, y = load_inflation(cfg)
    out = Path(args.out or cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    traces = {s.value: run_chain(run, y) for s, run in runs.items()}
    wall = time.perf_counter() - t0
    means = {k: tr.block("tau").mean(axis=0) for k, tr in traces.items()}
    T = means["mode"].shape[0]
    labels = dates[-T:]
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "tau_mode", "tau_quadprog", "abs_diff"])
        for t in range(T):
            a, b = means["mode"][t], means["quadprog"][t]
            w.writerow([labels[t], fmt(a), fmt(b), fmt(abs(a - b))])
    with open(out / "compare_efficiency.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "block", "min", "q1", "median", "q3", "max"])
        for k, tr in traces.items():
            for block, five in efficiency_report(tr).blocks.items():
                w.writerow([k, block] + [fmt(v) for v in five])
    write_manifest(out / "manifest.txt",
                   _manifest("compare", cfg, runs[Strategy.MODE], wall, traces))
    diff = float(np.mean(np.abs(means["mode"] - means["quadprog"])))
    print(f"mean |trend difference| = {diff:.4g}; wrote {out}/compare.csv, compare_efficiency.csv")
    return EXIT_OK


@dataclass
class BenchRow:
    T: int
    median_seconds: float
    mean_iterations: float
    max_kkt: float


def bench_qp(y, T_values, a_tau: float, b_tau: float, repeats: int = 5,
             sigma2: float = 1.0, omega2: float = 0.0625) -> list[BenchRow]:
    """Time the box QP built from the first T observations of ``y``.

    ``C`` and ``m`` are the precision and mean of the unconstrained trend
    conditional (white-noise measurement error, ``tau0 = y_1``).
    """
    y = np.asarray(y, dtype=float)
    rows = []
    for T in T_values:
        if T > y.shape[0]:
            raise DataError(f"T={T} exceeds the {y.shape[0]} available observations")
        g = ucar_trend_system(y[:T], float(y[0]), 0.0, sigma2, omega2)
        problem = BoxQp(g.precision, g.mean, a_tau, b_tau)
        solve_box_qp(problem)  # warm-up, discarded
        times, iters, kkt = [], [], 0.0
        for _ in range(repeats):
            t0 = time.perf_counter()
            res = solve_box_qp(problem)
            times.append(time.perf_counter() - t0)
            iters.append(res.iterations)
            kkt = max(kkt, res.kkt_residual / problem.scale())
        rows.append(BenchRow(T, float(np.median(times)), float(np.mean(iters)), kkt))
    return rows


def cmd_bench_qp(args) -> int:
    cfg = _resolve(args) if args.config else {}
    if args.data:
        cfg["data"] = args.data
    for key in ("a_tau", "b_tau"):
        if getattr(args, key) is not None:
            cfg[key] = str(getattr(args, key))
    missing = [k for k in ("a_tau", "b_tau") if k not in cfg]
    if missing:
        raise ConfigError(f"bench-qp needs {', '.join(missing)}")
    if args.repeats < 1:
        raise ConfigError("repeats must be >= 1")
    _, y = load_inflation(cfg)
    Ts = list(range(args.tmin, args.tmax + 1, args.step))
    if not Ts or args.tmin < 1:
        raise ConfigError("empty or invalid T range")
    rows = bench_qp(y, Ts, _num(cfg, "a_tau"), _num(cfg, "b_tau"), args.repeats)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "median_seconds", "mean_iterations"])
        for r in rows:
            w.writerow([r.T, fmt(r.median_seconds), fmt(r.mean_iterations)])
    worst = max(r.max_kkt for r in rows)
    print(f"wrote {out}; slowest median {max(r.median_seconds for r in rows):.4g} s, "
          f"max scaled KKT residual {worst:.3g}")
    return EXIT_OK


def simulate_cpi(model: str, n_quarters: int, seed: int, start: str = "1947Q1",
                 a_tau: float = 0.0, b_tau: float = 5.0, base: float = 20.0) -> CpiSeries:
    """Synthetic CPI levels whose inflation follows ``model``.

    UC-AR: tau0 = 3, rho = 0.5, sigma2 = 1, omega2 = 0.0625. Bounded: trend and
    AR paths are truncated random walks in their boxes (trend variance 0.02,
    AR variance 0.001) and log-volatility a random walk from log 0.5.
    """
    if n_quarters < 3:
        raise ConfigError("need at least 3 quarters")
    q0 = _quarter_index(start)
    if q0 is None:
        raise ConfigError(f"bad start quarter {start!r}")
    rng = RngStream(seed)
    T = n_quarters - 1
    if model == "ucar":
        tau = 3.0 + np.cumsum(0.25 * rng.standard_normal(T))
        pi = ucar_simulate_data(UcArState(tau=tau, tau0=3.0, rho=0.5, sigma2=1.0, omega2=0.0625), rng)
    elif model == "bounded":
        mid = 0.5 * (a_tau + b_tau)
        tau = truncated_rw_draw(T, a_tau, b_tau, mid, 0.02, 0.02, rng)
        rho = truncated_rw_draw(T, 0.0, 1.0, 0.5, 0.001, 0.001, rng)
        h = math.log(0.5) + np.cumsum(math.sqrt(0.01) * rng.standard_normal(T))
        state = BoundedState(tau=tau, rho=rho, h=h, sigma_tau2=0.02, sigma_rho2=0.001, sigma_h2=0.01)
        pi = bounded_simulate_data(state, rng, 0.0)
    else:
        raise ConfigError(f"unknown model {model!r}")
    levels = base * np.exp(np.concatenate(([0.0], np.cumsum(pi / 400.0))))
    return CpiSeries([quarter_label(q0 + i) for i in range(n_quarters)], levels)


def cmd_simulate(args) -> int:
    series = simulate_cpi(args.model, args.quarters, args.seed, args.start, args.a_tau, args.b_tau)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_cpi_csv(out, series)
    print(f"wrote {len(series)} quarters to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boxtrend",
                                description="Bounded trend-inflation models with QP-based ARMH proposals.")
    p.add_argument("-v", "--verbose", action="store_true", help="log sampler fallbacks and progress")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--out", help="output directory (default: config 'out' or .)")

    sp = sub.add_parser("run", help="run one chain and write trace, summary, efficiency and manifest")
    add_common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="run Mode and QuadProg chains on the same data and seed")
    add_common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("bench-qp", help="time the box QP on growing data prefixes")
    sp.add_argument("--config", help="config file supplying data and a_tau/b_tau")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--data", help="CPI csv (overrides config)")
    sp.add_argument("--a-tau", dest="a_tau", type=float)
    sp.add_argument("--b-tau", dest="b_tau", type=float)
    sp.add_argument("--tmin", type=int, default=50)
    sp.add_argument("--tmax", type=int, default=550)
    sp.add_argument("--step", type=int, default=50)
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--out", default="bench_qp.csv")
    sp.set_defaults(func=cmd_bench_qp)

    sp = sub.add_parser("simulate", help="write a synthetic CPI csv")
    sp.add_argument("--model", choices=("ucar", "bounded"), default="bounded")
    sp.add_argument("--quarters", type=int, default=600)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--start", default="1947Q1")
    sp.add_argument("--a-tau", dest="a_tau", type=float, default=0.0)
    sp.add_argument("--b-tau", dest="b_tau", type=float, default=5.0)
    sp.add_argument("--out", default="cpi.csv")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
