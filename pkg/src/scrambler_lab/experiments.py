"""Experiment grids: configuration, per-trajectory seeding, pipelines and file output."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from . import __version__
from .analysis import ObservableCurve, collapse_fit, crossing_point, filter_sizes
from .circuit import CircuitParams, Model, build_schedule, is_power_of_two
from .percolation import (
    CSV_HEADER as CURVE_HEADER,
    binder_cumulant,
    convolve_canonical,
    merge_sweeps,
    network_for,
    newman_ziff_sweep,
    spanning_probability,
    susceptibility,
)
from .qecc import CodeDiagnostics, code_rate, code_state, contiguous_code_distance, summarize
from .rg import fixed_point
from .stabilizer import (
    init_z_polarized,
    purification_setup,
    purification_time,
    run_trajectory,
    tmi_observable,
)

EXPERIMENTS = ("percolation", "entanglement", "purification", "qecc", "rg")
TRAJ_HEADER = ("model", "N", "k", "p", "seed", "t", "observable", "value")
CHUNK = 64


class ConfigError(ValueError):
    pass


def _load_toml(path: Path) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:  # pragma: no cover
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_mapping(path: str | os.PathLike) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    if path.suffix.lower() == ".toml":
        return _load_toml(path)
    if path.suffix.lower() == ".json":
        return json.loads(path.read_text())
    raise ConfigError("config must be a .toml or .json file")


def _p_grid(spec) -> list[float]:
    if isinstance(spec, dict):
        try:
            grid = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        except KeyError as exc:
            raise ConfigError(f"p grid needs start, stop and num (missing {exc})") from None
        return [round(float(x), 12) for x in grid]
    if isinstance(spec, (int, float)):
        return [float(spec)]
    return [float(x) for x in spec]


@dataclass
class RunConfig:
    experiment: str
    model: str = "PWR2"
    N: list = field(default_factory=list)
    k: list = field(default_factory=lambda: [1])
    p: list = field(default_factory=list)
    trajectories: int = 100
    seed: int = 0
    output: str = "results"
    threads: int | None = None
    layers_per_n: float | None = None
    thermalizer_per_n: float = 4.0

    @classmethod
    def from_mapping(cls, raw: dict, base: Path | None = None) -> "RunConfig":
        raw = dict(raw)
        if "realizations" in raw:
            raw.setdefault("trajectories", raw.pop("realizations"))
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "experiment" not in raw:
            raise ConfigError("config needs an 'experiment' key")
        if "p" in raw:
            raw["p"] = _p_grid(raw["p"])
        for key in ("N", "k"):
            if key in raw and not isinstance(raw[key], list):
                raw[key] = [raw[key]]
        cfg = cls(**raw)
        if base is not None and not os.path.isabs(cfg.output):
            cfg.output = str(base / cfg.output)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunConfig":
        return cls.from_mapping(load_mapping(path), Path(path).resolve().parent)

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.experiment == "rg":
            return
        try:
            Model(self.model)
        except ValueError:
            raise ConfigError(f"unknown model {self.model!r}") from None
        if not self.N or not self.p or not self.k:
            raise ConfigError("N, k and p grids must be nonempty")
        for N in self.N:
            if not isinstance(N, int) or not is_power_of_two(N) or N < 2:
                raise ConfigError(f"N={N!r} is not a power of two >= 2")
            for k in self.k:
                kk = int(math.log2(N)) if k == "complete" else k
                if not isinstance(kk, int) or not 1 <= kk <= int(math.log2(N)):
                    raise ConfigError(f"k={k!r} invalid for N={N}")
        if any(not 0.0 <= p <= 1.0 for p in self.p):
            raise ConfigError("p values must lie in [0, 1]")
        if self.trajectories < 1:
            raise ConfigError("trajectories must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def cells(self) -> Iterator[tuple[int, int]]:
        for N in self.N:
            for k in self.k:
                yield N, int(math.log2(N)) if k == "complete" else int(k)

    def digest(self) -> str:
        d = asdict(self)
        d.pop("threads")
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def trajectory_seed(master: int, model: str, N: int, k: int, p_index: int, traj: int) -> int:
    """64-bit seed for one trajectory, a pure function of its grid coordinates."""
    tag = f"{master}|{model}|{N}|{k}|{p_index}|{traj}".encode()
    return int.from_bytes(hashlib.blake2b(tag, digest_size=8).digest(), "little")


def resolve_threads(cli_value: int | None = None, cfg_value: int | None = None) -> int:
    if cli_value:
        return max(1, int(cli_value))
    env = os.environ.get("SCRAMBLER_THREADS")
    if env:
        return max(1, int(env))
    if cfg_value:
        return max(1, int(cfg_value))
    return os.cpu_count() or 1


# ------------------------------------------------------------------ tasks


def _layers(cfg_layers, N, default):
    return max(1, int(round((default if cfg_layers is None else cfg_layers) * N)))


def _entanglement_task(args):
    model, N, k, p, seeds, T = args
    rows = []
    obs = {"tmi": tmi_observable(N)}
    for seed in seeds:
        sched = build_schedule(CircuitParams(N, k, Model(model), T, p, seed))
        res = run_trajectory(sched, init_z_polarized(N, track_signs=False), obs, copy=False)
        for t, name, v in res.rows:
            rows.append((model, N, k, p, seed, t, name, v))
    return rows


def _purification_task(args):
    model, N, k, p, seeds, T, therm = args
    rows = []
    for seed in seeds:
        tab = purification_setup(N, seed ^ 0x5A5A5A5A5A5A5A5A, therm)
        sched = build_schedule(CircuitParams(N, k, Model(model), T, p, seed))
        tau = purification_time(sched, tab)
        rows.append((model, N, k, p, seed, T, "tau", float(T if tau is None else tau)))
        rows.append((model, N, k, p, seed, T, "censored", float(tau is None)))
    return rows


def _qecc_task(args):
    model, N, k, p, seeds, T = args
    rows = []
    for seed in seeds:
        tab = code_state(CircuitParams(N, k, Model(model), 1, p, seed), n_layers=T)
        d = contiguous_code_distance(tab)
        rows.append((model, N, k, p, seed, T, "r_code", code_rate(tab)))
        rows.append((model, N, k, p, seed, T, "d_code", math.nan if d is None else float(d)))
    return rows


def _percolation_task(args):
    model, N, k, T, grid, seed, first, count, net_seed = args
    net = network_for(model, N, k, T, net_seed)
    return newman_ziff_sweep(net, count, seed, grid, first=first)


def _pool_map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield fn(t)
        return
    with ProcessPoolExecutor(max_workers=threads) as ex:
        yield from ex.map(fn, tasks)


# ------------------------------------------------------------------ runner


class _Manifest:
    def __init__(self, out: Path, cfg: RunConfig, threads: int):
        self.path = out / "manifest.json"
        self.data = {
            "config_hash": cfg.digest(),
            "config": asdict(cfg),
            "version": __version__,
            "threads": threads,
            "started": time.time(),
            "wall_time": None,
            "complete": False,
            "files": [],
        }
        self._t0 = time.perf_counter()
        self.write()

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, default=str))

    def finish(self, files):
        self.data["files"] = [str(f) for f in files]
        self.data["wall_time"] = time.perf_counter() - self._t0
        self.data["complete"] = True
        self.write()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def run_experiment(cfg: RunConfig, threads: int | None = None, progress=None) -> dict:
    """Run every grid cell of ``cfg`` and write CSV/JSON outputs; returns a summary."""
    threads = resolve_threads(threads, cfg.threads)
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    manifest = _Manifest(out, cfg, threads)
    say = progress or (lambda msg: None)
    if cfg.experiment == "rg":
        fp = fixed_point()
        path = out / "rg.json"
        path.write_text(json.dumps(fp.to_dict(), indent=2))
        manifest.finish([path])
        return {"rg": fp.to_dict(), "files": [str(path)]}
    if cfg.experiment == "percolation":
        files = _run_percolation(cfg, out, threads, say)
    else:
        files = _run_trajectories(cfg, out, threads, say)
    manifest.finish(files)
    return {"files": [str(f) for f in files]}


def _run_trajectories(cfg, out, threads, say):
    path = out / f"{cfg.experiment}.csv"
    tasks, cells = [], []
    for N, k in cfg.cells():
        for ip, p in enumerate(cfg.p):
            seeds = [trajectory_seed(cfg.seed, cfg.model, N, k, ip, j) for j in range(cfg.trajectories)]
            cells.append((N, k, p))
            if cfg.experiment == "entanglement":
                T = _layers(cfg.layers_per_n, N, 8)
                tasks.append((_entanglement_task, (cfg.model, N, k, p, seeds, T)))
            elif cfg.experiment == "purification":
                T = _layers(cfg.layers_per_n, N, 64)
                therm = _layers(cfg.thermalizer_per_n, N, 4)
                tasks.append((_purification_task, (cfg.model, N, k, p, seeds, T, therm)))
            else:
                T = _layers(cfg.layers_per_n, N, 8)
                tasks.append((_qecc_task, (cfg.model, N, k, p, seeds, T)))
    fn = tasks[0][0]
    summaries = []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJ_HEADER)
        fh.flush()
        for (N, k, p), rows in zip(cells, _pool_map(fn, [a for _, a in tasks], threads)):
            rows.sort(key=lambda r: (r[4], r[6]))
            w.writerows([tuple(_fmt(x) for x in r) for r in rows])
            fh.flush()
            say(f"{cfg.experiment} N={N} k={k} p={p}: {len(rows)} rows")
            if cfg.experiment == "qecc":
                rates = [r[7] for r in rows if r[6] == "r_code"]
                ds = [None if math.isnan(r[7]) else int(r[7]) for r in rows if r[6] == "d_code"]
                summaries.append(summarize(cfg.model, N, k, p, rates, ds))
    files = [path]
    if cfg.experiment == "qecc":
        qpath = out / "qecc_summary.csv"
        with open(qpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CodeDiagnostics.CSV_HEADER)
            for s in summaries:
                w.writerow([_fmt(x) for x in s.csv_row()])
        files.append(qpath)
    return files


def percolation_sweep(model: str, N: int, k: int, n_real: int, seed: int, p_grid,
                      layers_per_n: float | None = None, threads: int = 1):
    """Chunked, reproducible sweep of one (model, N, k) network family.

    Realizations are split into fixed chunks of 64; AA chunks each draw a
    fresh network.  Results do not depend on ``threads``.
    """
    T = _layers(layers_per_n, N, 1)
    grid = [float(p) for p in p_grid]
    cell_seed = trajectory_seed(seed, model, N, k, -1, 0)
    tasks = []
    for first in range(0, n_real, CHUNK):
        count = min(CHUNK, n_real - first)
        net_seed = trajectory_seed(seed, model, N, k, -2, first // CHUNK) if model == "AA" else 0
        tasks.append((model, N, k, T, grid, cell_seed, first, count, net_seed))
    return merge_sweeps(list(_pool_map(_percolation_task, tasks, threads)))


def _run_percolation(cfg, out, threads, say):
    path = out / "percolation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        fh.flush()
        for N, k in cfg.cells():
            sweep = percolation_sweep(cfg.model, N, k, cfg.trajectories, cfg.seed, cfg.p,
                                      cfg.layers_per_n, threads)
            sweep.meta.update(model=cfg.model, N=N, k=k)
            curves = [
                convolve_canonical(sweep, sweep.p_grid, "c_max"),
                binder_cumulant(sweep),
                susceptibility(sweep),
                spanning_probability(sweep),
            ]
            for c in curves:
                w.writerows([tuple(_fmt(x) for x in r) for r in c.csv_rows()])
            fh.flush()
            say(f"percolation N={N} k={k}: {sweep.n_realizations} realizations")
    return [path]


# ------------------------------------------------------------------ analysis


@dataclass
class AnalyzeConfig:
    input: str
    observable: str
    kind: str = "percolation"
    model: str | None = None
    k: list | None = None
    p_min: float = 0.0
    p_max: float = 1.0
    ansatz: str = "standard"
    fixed: dict = field(default_factory=dict)
    n_boot: int = 5000
    collapse_boot: int | None = None
    seed: int = 0
    strict_sizes: bool = False
    output: str = "analysis"
    crossing: bool = True
    collapse: bool = True
    branch: str | None = None  # "decreasing"/"increasing" for curves that cross twice

    @classmethod
    def load(cls, path) -> "AnalyzeConfig":
        raw = load_mapping(path)
        extra = set(raw) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown analyze keys: {sorted(extra)}")
        for key in ("input", "observable"):
            if key not in raw:
                raise ConfigError(f"analyze config needs {key!r}")
        cfg = cls(**raw)
        base = Path(path).resolve().parent
        if not os.path.isabs(cfg.input):
            cfg.input = str(base / cfg.input)
        if os.path.isdir(cfg.input):
            # a run directory: pick the data file the run wrote
            names = ["percolation.csv"] if cfg.kind == "percolation" else \
                [f"{e}.csv" for e in ("entanglement", "purification", "qecc")]
            found = [n for n in names if os.path.isfile(os.path.join(cfg.input, n))]
            if len(found) != 1:
                raise ConfigError(f"cannot pick a {cfg.kind} data file in {cfg.input}")
            cfg.input = os.path.join(cfg.input, found[0])
        if not os.path.isabs(cfg.output):
            cfg.output = str(base / cfg.output)
        if cfg.k is not None and not isinstance(cfg.k, list):
            cfg.k = [cfg.k]
        return cfg


def _read_csv(path: str, required) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(required) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path} is missing columns {sorted(missing)}")
        return list(reader)


def curves_from_csv(path: str, observable: str, kind: str = "percolation",
                    model: str | None = None) -> dict[tuple[str, int], list[ObservableCurve]]:
    """Group CSV data into ObservableCurves keyed by (model, k)."""
    if kind == "percolation":
        rows = _read_csv(path, CURVE_HEADER)
        acc: dict = {}
        for r in rows:
            if r["observable"] != observable or (model and r["model"] != model):
                continue
            key = (r["model"], int(r["k"]), int(r["N"]))
            acc.setdefault(key, []).append((float(r["p"]), float(r["value"]), float(r["stderr"])))
    else:
        rows = _read_csv(path, TRAJ_HEADER)
        raw: dict = {}
        for r in rows:
            if r["observable"] != observable or (model and r["model"] != model):
                continue
            v = float(r["value"])
            if math.isnan(v):
                continue
            key = (r["model"], int(r["k"]), int(r["N"]))
            raw.setdefault(key, {}).setdefault(float(r["p"]), []).append(v)
        acc = {}
        for key, by_p in raw.items():
            for p, vals in by_p.items():
                a = np.asarray(vals)
                err = a.std(ddof=1) / math.sqrt(a.size) if a.size > 1 else 0.0
                acc.setdefault(key, []).append((p, float(a.mean()), float(err)))
    out: dict = {}
    for (m, k, N), pts in sorted(acc.items()):
        pts.sort()
        arr = np.asarray(pts)
        out.setdefault((m, k), []).append(
            ObservableCurve(N, arr[:, 0], arr[:, 1], arr[:, 2], k, m, observable)
        )
    return out


def analyze(cfg: AnalyzeConfig) -> list[dict]:
    """Crossings and collapse fits for each (model, k) group; writes JSON and a crossing table."""
    groups = curves_from_csv(cfg.input, cfg.observable, cfg.kind, cfg.model)
    if cfg.k is not None:
        groups = {key: v for key, v in groups.items() if key[1] in cfg.k}
    if not groups:
        raise ConfigError(f"no rows for observable {cfg.observable!r} in {cfg.input}")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    results, table = [], []
    for (model, k), curves in groups.items():
        curves = filter_sizes([c.window(cfg.p_min, cfg.p_max) for c in curves], k, cfg.strict_sizes)
        entry: dict[str, Any] = {"observable": cfg.observable, "model": model, "k": k,
                                 "sizes_used": [c.N for c in curves]}
        if cfg.crossing:
            if len(curves) < 2:
                raise ConfigError(
                    f"crossing for model={model} k={k} is underdetermined: "
                    f"{len(curves)} system size(s) after filtering"
                )
            cr = crossing_point(curves, cfg.n_boot, cfg.seed, cfg.branch)
            entry["crossing"] = {"p_c": cr.p_c, "p_c_err": cr.error}
            for (n1, n2), (m, e) in cr.pairs.items():
                table.append((model, k, n1, n2, m, e))
        if cfg.collapse:
            if len(curves) < 3:
                raise ConfigError(
                    f"collapse fit for model={model} k={k} is underdetermined: "
                    f"{len(curves)} system size(s), need 3"
                )
            nb = cfg.n_boot if cfg.collapse_boot is None else cfg.collapse_boot
            fit = collapse_fit(curves, cfg.ansatz, cfg.fixed, nb, cfg.seed)
            entry.update(fit.to_dict())
            entry["at_bounds"] = fit.at_bounds
        results.append(entry)
    (out / f"fits_{cfg.observable}.json").write_text(json.dumps(results, indent=2))
    with open(out / f"crossings_{cfg.observable}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("model", "k", "N1", "N2", "p_cross", "p_cross_err"))
        w.writerows(table)
    return results
