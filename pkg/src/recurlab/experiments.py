"""Config-driven experiment runner.

Reads a JSON config, fans orbits out across worker processes, and writes
CSV/JSON outputs whose bytes depend only on (config, seed), never on the
worker count: every orbit is a pure function of (master seed, orbit index)
and the orchestrator merges results in index order.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import borel_cantelli as bc
from . import recurrence as rc
from . import rng as rnglib
from .billiard import BilliardState, BilliardTable, default_table, invariant_sample
from .errors import ConfigError, MissingInputError, TableError
from .interval_maps import IntervalMap, get_map

MODES = ("hitting", "recurrence", "bc-check", "mixing-check", "s-r-scan",
         "diophantine")
TARGET_SEED_TAG = 2**32  # orbit-index namespace reserved for targets

_MAP_IDS = ("tent", "doubling", "gauss", "lorenz", "custom")


def is_billiard_id(system: str) -> bool:
    return system.split(":", 1)[0] not in _MAP_IDS


def resolve_system(system: str):
    """Map id -> IntervalMap; 'billiard:default' or a table path -> table."""
    if not is_billiard_id(system):
        return get_map(system)
    if system == "billiard:default":
        return default_table()
    path = system.split(":", 1)[1] if system.startswith("billiard:") else system
    if not os.path.exists(path):
        raise TableError(f"billiard table file not found: {path}")
    return BilliardTable.from_json(path)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


@dataclass
class ExperimentConfig:
    system: str
    mode: str
    n_max: int
    orbits: int
    seed: int
    output_dir: str
    r_values: list = field(default_factory=lambda: [1])
    schedule: dict = field(default_factory=dict)   # {beta, delta}
    sep: dict = field(default_factory=dict)        # {R, eps, q}
    workers: object = "auto"
    n_min: int = 100
    mixing: dict = field(default_factory=dict)     # {target, rho, tuples, M}
    scan: dict = field(default_factory=dict)       # {deltas, J}
    rho_grid: list = field(default_factory=list)   # diophantine mode

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected {MODES}")
        if self.n_max < 10**3:
            raise ConfigError(f"n_max must be >= 1000, got {self.n_max}")
        if self.orbits < 1:
            raise ConfigError("orbits must be >= 1")
        if not self.r_values or any(int(r) < 1 for r in self.r_values):
            raise ConfigError("r_values must be positive integers")
        self.r_values = [int(r) for r in self.r_values]
        if self.workers != "auto":
            try:
                self.workers = int(self.workers)
            except (TypeError, ValueError):
                raise ConfigError(f"workers must be int or 'auto'")
            if self.workers < 1:
                raise ConfigError("workers must be >= 1")
        if self.n_min < 3:
            raise ConfigError("n_min must be >= 3")
        self.seed = int(self.seed)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        if not os.path.exists(path):
            raise MissingInputError(path)
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}")
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        missing = {"system", "mode", "n_max", "orbits", "seed", "output_dir"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    # -- derived ------------------------------------------------------------
    def is_billiard(self) -> bool:
        return is_billiard_id(self.system)

    def resolve_system(self):
        return resolve_system(self.system)

    def rho_schedule(self) -> bc.RhoSchedule:
        billiard = self.is_billiard()
        beta = self.schedule.get("beta", 0.5 if billiard else 1.0)
        delta = self.schedule.get("delta", 0.0)
        return bc.RhoSchedule(beta=beta, delta=delta,
                              sigma_exponent=2.0 if billiard else 1.0)

    def sep_config(self, r: int) -> bc.SepConfig:
        R = self.sep.get("R", 10.0)
        q = self.sep.get("q", 0.5)
        eps = self.sep.get("eps", 0.1)
        if not 0 < eps < (1 - q) / (2 * r):
            eps = (1 - q) / (4 * r)
        return bc.SepConfig(R=R, eps=eps, q=q, r=r)

    def n_workers(self) -> int:
        env = os.environ.get("RECURLAB_WORKERS")
        if env:
            return max(1, int(env))
        if self.workers == "auto":
            return max(1, os.cpu_count() or 1)
        return self.workers


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_time_s: float
    checksums: dict

    def write(self, path: str):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _chunks(indices, n_chunks):
    k, r = divmod(len(indices), n_chunks)
    out, start = [], 0
    for i in range(n_chunks):
        size = k + (1 if i < r else 0)
        if size:
            out.append(indices[start:start + size])
        start += size
    return out


# ---------------------------------------------------------------------------
# worker entry points (module level for pickling)
# ---------------------------------------------------------------------------

def _loglaw_worker(args):
    (system_id, mode, indices, seed, n_max, rs, grid, target_repr) = args
    system = resolve_system(system_id)
    if isinstance(system, BilliardTable):
        target = None
        if target_repr is not None:
            target = BilliardState(*target_repr)
        res = rc.billiard_ensemble(system, indices, seed, n_max, rs, grid,
                                   mode=mode, target=target)
    else:
        res = rc.interval_ensemble(system, indices, seed, n_max, rs, grid,
                                   mode=mode, target=target_repr)
    return list(zip(indices, res))


def _diophantine_worker(args):
    (system_id, indices, seed, n_max, rho_grid) = args
    system = resolve_system(system_id)
    out = []
    for i in indices:
        s = rnglib.split_seed(seed, i)
        if isinstance(system, BilliardTable):
            sysad = rc.BilliardSystem(system)
            x = rc._billiard_start(system, s)
        else:
            sysad = rc.IntervalSystem(system)
            x = float(system.sample_from_uniform(rnglib.uniform(s, 0)))
        prof = rc.diophantine_profile(sysad, x, rho_grid, n_max)
        out.append((i, prof.points, prof.slope))
    return out


def _bc_check_worker(args):
    (system_id, kind, indices, seed, n_max, beta, delta, target_repr) = args
    system = resolve_system(system_id)
    billiard = isinstance(system, BilliardTable)
    sched = bc.RhoSchedule(beta=beta, delta=delta,
                           sigma_exponent=2.0 if billiard else 1.0)
    m_max = int(math.floor(math.log2(n_max))) - 1
    ms = list(range(1, m_max + 1))
    seeds = [rnglib.split_seed(seed, i) for i in indices]
    if billiard:
        sid = np.empty(len(indices), dtype=np.int64)
        r = np.empty(len(indices))
        phi = np.empty(len(indices))
        for j, s in enumerate(seeds):
            st = rc._billiard_start(system, s)
            sid[j], r[j], phi[j] = st.scatterer_id, st.r, st.phi
        tgt = None
        if target_repr is not None:
            tgt = (np.int64(target_repr[0]), target_repr[1], target_repr[2])
        stream = rc.BilliardOrbitStream(system, sid, r, phi, target=tgt)
    else:
        targets = None if target_repr is None \
            else np.full(len(indices), float(target_repr))
        if system.has_tape:
            stream = rc.TapeDistanceStream(system.tape_kind, seeds,
                                           2**(m_max + 1), targets=targets)
        else:
            starts = np.array([
                float(system.sample_from_uniform(rnglib.uniform(s, 0)))
                for s in seeds])
            stream = rc.FloatOrbitStream(system, starts, targets=targets)

    n_top = 2**(m_max + 1)
    counts = np.zeros((len(indices), len(ms)), dtype=np.int64)
    hi_hits = [[[] for _ in ms] for _ in indices]
    rhos = {m: sched.rho(2**m) for m in range(1, m_max + 2)}
    block = 8192
    k0 = 0
    while k0 < n_top:
        size = min(block, n_top - k0)
        d = stream.block(k0, size)
        for mi, m in enumerate(ms):
            lo, hi = k0, min(k0 + size, 2**m)
            if hi > lo:
                counts[:, mi] += (d[:, :hi - lo] <= rhos[m]).sum(axis=1)
            blo = max(k0, 2**m)
            bhi = min(k0 + size, 2**(m + 1))
            if bhi > blo:
                sub = d[:, blo - k0:bhi - k0] <= rhos[m + 1]
                rows, cols = np.nonzero(sub)
                for rr, cc in zip(rows, cols):
                    hi_hits[rr][mi].append(blo + int(cc) + 1)
        k0 += size
    return [(i, counts[j], hi_hits[j]) for j, i in enumerate(indices)]


# ---------------------------------------------------------------------------
# mode drivers
# ---------------------------------------------------------------------------

def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _run_pool(cfg: ExperimentConfig, worker, payloads):
    n_workers = min(cfg.n_workers(), len(payloads))
    if n_workers <= 1:
        results = [worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(worker, payloads))
    merged = [item for part in results for item in part]
    merged.sort(key=lambda t: t[0])
    return merged


def _pick_target(cfg: ExperimentConfig, system):
    rng = rnglib.CounterRng(rnglib.split_seed(cfg.seed, TARGET_SEED_TAG))
    if isinstance(system, BilliardTable):
        st = invariant_sample(system, rng)
        return (st.scatterer_id, st.r, st.phi)
    return float(system.sample_from_uniform(rng.uniform()))


def _mode_loglaw(cfg: ExperimentConfig, out_dir: str) -> dict:
    system = cfg.resolve_system()
    grid = rc.geometric_grid(max(cfg.n_min, max(cfg.r_values) + 1), cfg.n_max)
    target = _pick_target(cfg, system) if cfg.mode == "hitting" else None
    payloads = [(cfg.system, cfg.mode, chunk, cfg.seed, cfg.n_max,
                 cfg.r_values, grid, target)
                for chunk in _chunks(list(range(cfg.orbits)), cfg.n_workers())]
    merged = _run_pool(cfg, _loglaw_worker, payloads)

    rows = []
    lam_max = {r: [] for r in cfg.r_values}
    log_ratio = {r: [] for r in cfg.r_values}
    for orbit_id, series_by_r in merged:
        for r in cfg.r_values:
            s = series_by_r[r]
            for (n, d, lam) in s.checkpoints:
                rows.append((orbit_id, r, n, d, lam))
            lam_max[r].append(rc.limsup_estimate(s, cfg.n_min).value)
            n_f, d_f, _ = s.checkpoints[-1]
            if d_f > 0 and math.isfinite(d_f):
                log_ratio[r].append(abs(math.log(d_f)) / math.log(n_f))
    _write_csv(os.path.join(out_dir, "loglaw.csv"),
               ["orbit_id", "r", "n", "d_rth", "lambda"], rows)
    per_r = {
        str(r): {
            "median_lambda_max": float(np.median(lam_max[r])),
            "median_abs_log_ratio": (float(np.median(log_ratio[r]))
                                     if log_ratio[r] else None),
        } for r in cfg.r_values
    }
    return {
        "median_lambda_max": per_r[str(cfg.r_values[0])]["median_lambda_max"],
        "per_r": per_r,
        "n_max": cfg.n_max,
        "r": cfg.r_values,
        "map": cfg.system,
        "seed": cfg.seed,
        "mode": cfg.mode,
        "target": target,
    }


def _mode_bc_check(cfg: ExperimentConfig, out_dir: str) -> dict:
    sched = cfg.rho_schedule()
    kind = "recurrence"
    target = None
    system = cfg.resolve_system()
    payloads = [(cfg.system, kind, chunk, cfg.seed, cfg.n_max,
                 sched.beta, sched.delta, target)
                for chunk in _chunks(list(range(cfg.orbits)), cfg.n_workers())]
    merged = _run_pool(cfg, _bc_check_worker, payloads)
    m_max = int(math.floor(math.log2(cfg.n_max))) - 1
    ms = list(range(1, m_max + 1))

    rows = []
    z_means = {}
    for r in cfg.r_values:
        sep = cfg.sep_config(r)
        frac = []
        zs = np.zeros(len(merged), dtype=np.int64)
        for mi, m in enumerate(ms):
            ge = 0
            for j, (orbit_id, counts, hits) in enumerate(merged):
                if counts[mi] >= r:
                    ge += 1
                if bc.separated_subset_size(hits[mi], sep.s_hat(2**(m + 1)), r) >= r:
                    zs[j] += 1
            frac.append(ge / len(merged))
            rows.append((m, 2**m, r, frac[-1]))
        z_means[str(r)] = float(np.mean(zs))
    _write_csv(os.path.join(out_dir, "hr_proxy.csv"),
               ["m", "n", "r", "fraction_ge_r"], rows)
    srs = {str(r): asdict(bc.s_r_partial(sched, r, J=10**4)) for r in cfg.r_values}
    return {"schedule": {"beta": sched.beta, "delta": sched.delta,
                         "sigma_exponent": sched.sigma_exponent},
            "mean_z": z_means, "s_r": srs, "orbits": cfg.orbits,
            "n_max": cfg.n_max, "map": cfg.system, "seed": cfg.seed}


def _mode_mixing(cfg: ExperimentConfig, out_dir: str) -> dict:
    system = cfg.resolve_system()
    rho = float(cfg.mixing.get("rho", 0.02))
    M = int(cfg.mixing.get("M", cfg.orbits))
    tuples = [tuple(int(k) for k in t)
              for t in cfg.mixing.get("tuples", [[25], [25, 50], [1, 2]])]
    if isinstance(system, BilliardTable):
        target_repr = cfg.mixing.get("target")
        target = (BilliardState(*target_repr) if target_repr
                  else BilliardState(*_pick_target(cfg, system)))
        tname = f"({target.scatterer_id};{target.r:.6g};{target.phi:.6g})"
    else:
        target = float(cfg.mixing.get("target", 0.3))
        tname = f"{target:.6g}"
    rows = []
    summary = {}
    for j, t in enumerate(tuples):
        est = bc.estimate_gm1(system, target, t, rho, M,
                              rnglib.split_seed(cfg.seed, j))
        rows.append((cfg.system, "+".join(map(str, t)), rho, M,
                     est.p_hat, est.se, est.sigma_r, est.ratio))
        summary["+".join(map(str, t))] = {
            "p_hat": est.p_hat, "ratio": est.ratio,
            "insufficient": est.insufficient}
    _write_csv(os.path.join(out_dir, "gm_estimates.csv"),
               ["system", "tuple", "rho", "M", "p_hat", "se", "sigma_r",
                "ratio"], rows)
    return {"target": tname, "rho": rho, "M": M, "estimates": summary,
            "map": cfg.system, "seed": cfg.seed}


def _mode_sr_scan(cfg: ExperimentConfig, out_dir: str) -> dict:
    sched0 = cfg.rho_schedule()
    deltas = cfg.scan.get("deltas") or [round(0.2 + 0.1 * i, 10) for i in range(13)]
    J = int(cfg.scan.get("J", 10**6))
    rows = []
    for r in cfg.r_values:
        for d in deltas:
            sched = bc.RhoSchedule(beta=sched0.beta, delta=float(d),
                                   sigma_exponent=sched0.sigma_exponent)
            res = bc.s_r_partial(sched, r, J)
            rows.append((sched.beta, d, sched.sigma_exponent, r, J,
                         res.partial_sum, res.classification))
    _write_csv(os.path.join(out_dir, "s_r.csv"),
               ["beta", "delta", "sigma_exponent", "r", "J", "partial_sum",
                "classification"], rows)
    return {"beta": sched0.beta, "deltas": list(deltas), "J": J,
            "r": cfg.r_values, "seed": cfg.seed}


def _mode_diophantine(cfg: ExperimentConfig, out_dir: str) -> dict:
    rho_grid = cfg.rho_grid or [2.0**-k for k in range(4, 13)]
    payloads = [(cfg.system, chunk, cfg.seed, cfg.n_max, rho_grid)
                for chunk in _chunks(list(range(cfg.orbits)), cfg.n_workers())]
    merged = _run_pool(cfg, _diophantine_worker, payloads)
    rows = []
    slopes = []
    for orbit_id, points, slope in merged:
        for rho, tau in points:
            rows.append((orbit_id, rho, tau if tau is not None else ""))
        if slope is not None:
            slopes.append(slope)
    _write_csv(os.path.join(out_dir, "diophantine.csv"),
               ["orbit_id", "rho", "tau"], rows)
    return {"median_slope": float(np.median(slopes)) if slopes else None,
            "fraction_positive_slope": (float(np.mean([s > 0 for s in slopes]))
                                        if slopes else None),
            "orbits": cfg.orbits, "n_max": cfg.n_max,
            "map": cfg.system, "seed": cfg.seed}


def run(cfg: ExperimentConfig) -> RunManifest:
    """Execute one experiment; returns the manifest (also written to disk)."""
    t0 = time.time()
    cfg.resolve_system()  # fail fast on table/map errors
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    driver = {
        "hitting": _mode_loglaw,
        "recurrence": _mode_loglaw,
        "bc-check": _mode_bc_check,
        "mixing-check": _mode_mixing,
        "s-r-scan": _mode_sr_scan,
        "diophantine": _mode_diophantine,
    }[cfg.mode]
    summary = driver(cfg, out_dir)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    checksums = {
        name: _sha256(os.path.join(out_dir, name))
        for name in sorted(os.listdir(out_dir))
        if name.endswith(".csv") or name == "summary.json"
    }
    manifest = RunManifest(config=cfg.to_dict(), version=__version__,
                           wall_time_s=time.time() - t0, checksums=checksums)
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return manifest


def emit_plot_data(run_dir: str) -> str:
    """Long-format plot.csv (series, x = ln ln n, y = lambda) from loglaw.csv."""
    src = os.path.join(run_dir, "loglaw.csv")
    if not os.path.exists(src):
        raise MissingInputError(src)
    dst = os.path.join(run_dir, "plot.csv")
    with open(src) as fh:
        header = fh.readline().strip().split(",")
        idx = {name: i for i, name in enumerate(header)}
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            orbit, r = parts[idx["orbit_id"]], parts[idx["r"]]
            n = float(parts[idx["n"]])
            lam = parts[idx["lambda"]]
            rows.append((f"r{r}/orbit{orbit}", math.log(math.log(n)), lam))
    with open(dst, "w") as fh:
        fh.write("series,x,y\n")
        for s, x, y in rows:
            fh.write(f"{s},{_fmt(x)},{y}\n")
    return dst
