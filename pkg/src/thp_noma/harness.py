"""
Seeded Monte-Carlo experiments: SNR sweeps, eta sweeps and noiseless
symbol-level checks, written as CSV.

Every trial is a pure function of ``(config, seed)``; trial ``t`` uses
``seed = base_seed + t``, so the same channels are reused across the points
of a sweep.
"""

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .channel import SystemConfig, generate_population
from .errors import AmbiguousDecodeError, ConfigurationError, ThpNomaError
from .sca import ScaConfig, design_cluster, init_alpha, solve_joint
from .scheduling import schedule
from .thp import make_qam, mods_array, receive_strong, receive_weak, superpose, superposition_modulus, thp_encode
from .zf import zf_noma_rates

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("thp-joint", "thp-greedy", "zf-baseline")
RATE_COLUMNS = ("experiment", "method", "sweep", "value", "trial", "seed", "sum_strong", "sum_weak",
                "sum_total", "wall_time", "iterations", "status")
SYMBOL_COLUMNS = ("experiment", "method", "trial", "seed", "frames", "strong_errors", "weak_errors",
                  "max_fold_error", "status")
_SYSTEM_KEYS = {f.name for f in fields(SystemConfig)} - {"total_power"}


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run.

    System parameters other than ``total_power`` are taken from ``system``;
    the power follows from the SNR, ``P = noise_var * 10**(snr_db / 10)``.
    """

    system: dict = field(default_factory=dict)
    snr_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    eta_values: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    eta_snr_db: float = 15.0
    trials: int = 20
    seed: int = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    eta_methods: list = field(default_factory=lambda: ["thp-joint", "zf-baseline"])
    symbol_method: str = "thp-greedy"
    frames: int = 10_000
    qam_order: int = 4
    symbol_snr_db: float = None
    sca: dict = field(default_factory=dict)
    workers: int = 1
    timing: bool = True
    out: str = None

    def __post_init__(self):
        unknown = set(self.system) - _SYSTEM_KEYS
        if unknown:
            raise ConfigurationError(f"unknown system keys: {sorted(unknown)}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigurationError("trials must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        for name in ("snr_db", "eta_values"):
            values = getattr(self, name)
            if not values or not np.all(np.isfinite(np.asarray(values, dtype=float))):
                raise ConfigurationError(f"{name} must be a non-empty list of finite numbers")
        for m in [*self.methods, *self.eta_methods, self.symbol_method]:
            if m not in METHODS:
                raise ConfigurationError(f"unknown method {m!r}; expected one of {METHODS}")
        if self.symbol_method == "zf-baseline":
            raise ConfigurationError("symbol checks need a THP design")
        if int(self.frames) != self.frames or self.frames < 1:
            raise ConfigurationError("frames must be a positive integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigurationError("workers must be a positive integer")
        self.sca_config()
        self.system_config(0.0)

    def system_config(self, snr_db, eta=None):
        params = dict(self.system)
        if eta is not None:
            params["eta"] = eta
        return SystemConfig(**params).with_snr_db(snr_db)

    def sca_config(self):
        try:
            return ScaConfig(**self.sca)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad sca settings: {exc}") from exc

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def override(self, **kwargs):
        """Copy with the non-None keyword values applied."""
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


@dataclass
class ResultRow:
    experiment: str
    method: str
    sweep: str
    value: float
    trial: int
    seed: int
    sum_strong: float
    sum_weak: float
    sum_total: float
    wall_time: float
    iterations: int
    status: str = "ok"


@dataclass
class SymbolRow:
    experiment: str
    method: str
    trial: int
    seed: int
    frames: int
    strong_errors: int
    weak_errors: int
    max_fold_error: float
    status: str = "ok"


def _design(population, cfg, sca):
    """Scheduling with greedy per-cluster design."""
    optimizer = lambda *args: design_cluster(*args, sca=sca)
    return schedule(population, cfg, optimizer)


def run_trial(cfg, seed, methods, sca, experiment="", sweep="", value=np.nan):
    """All requested methods on one channel draw.

    The strong users, weak users and THP order come from the scheduler and
    are shared by every method; the joint design starts from the greedy
    one. Failures become rows with an ``error:`` status.
    """
    rows = []
    population = generate_population(cfg, seed)

    def row(method, report, elapsed, iterations, status="ok"):
        if report is None:
            return ResultRow(experiment, method, sweep, value, 0, seed, np.nan, np.nan, np.nan,
                             elapsed, iterations, status)
        return ResultRow(experiment, method, sweep, value, 0, seed, report.sum_strong, report.sum_weak,
                         report.sum_total, elapsed, iterations, status)

    t0 = time.perf_counter()
    try:
        assignment, greedy, _ = _design(population, cfg, sca)
    except ThpNomaError as exc:
        log.warning("seed %d: scheduling failed: %s", seed, exc)
        return [row(m, None, time.perf_counter() - t0, 0, f"error: {type(exc).__name__}: {exc}") for m in methods]
    greedy_time = time.perf_counter() - t0
    for method in methods:
        t1 = time.perf_counter()
        try:
            if method == "thp-greedy":
                rows.append(row(method, greedy.report, greedy_time, greedy.iterations))
            elif method == "thp-joint":
                sol = solve_joint(assignment, cfg, sca, init=init_alpha(assignment, cfg, greedy.beams, greedy.powers))
                rows.append(row(method, sol.report, time.perf_counter() - t1, sol.iterations))
            else:
                sol = zf_noma_rates(assignment, cfg)
                rows.append(row(method, sol.report, time.perf_counter() - t1, 0))
        except ThpNomaError as exc:
            log.warning("seed %d, %s failed: %s", seed, method, exc)
            rows.append(row(method, None, time.perf_counter() - t1, 0, f"error: {type(exc).__name__}: {exc}"))
    return rows


def _rate_task(args):
    cfg, seed, trial, methods, sca, experiment, sweep, value = args
    rows = run_trial(cfg, seed, methods, sca, experiment, sweep, value)
    for r in rows:
        r.trial = trial
    return rows


def _map(func, tasks, workers):
    if workers == 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps task order, so output does not depend on scheduling
        return list(pool.map(func, tasks))


def _finish(rows, config):
    if not config.timing:
        for r in rows:
            r.wall_time = np.nan
    return rows


def run_rate_sweep(config):
    """Sum rates versus SNR for every method in ``config.methods``."""
    sca = config.sca_config()
    tasks = [
        (config.system_config(snr), config.seed + t, t, list(config.methods), sca, "rate-sweep", "snr_db", float(snr))
        for snr in config.snr_db
        for t in range(config.trials)
    ]
    rows = [r for chunk in _map(_rate_task, tasks, config.workers) for r in chunk]
    return _finish(rows, config)


def run_eta_sweep(config):
    """Strong/weak sum-rate pairs versus eta at ``config.eta_snr_db``."""
    sca = config.sca_config()
    tasks = [
        (config.system_config(config.eta_snr_db, eta), config.seed + t, t, list(config.eta_methods), sca,
         "eta-sweep", "eta", float(eta))
        for eta in config.eta_values
        for t in range(config.trials)
    ]
    rows = [r for chunk in _map(_rate_task, tasks, config.workers) for r in chunk]
    return _finish(rows, config)


def symbol_trial(cfg, seed, frames, qam_order=4, method="thp-greedy", sca=None, snr_db=None):
    """End-to-end THP link for one channel draw.

    Draws ``frames`` random symbol pairs per cluster, superposes, precodes,
    sends through the strong and weak channels and decodes. With
    ``snr_db=None`` the link is noiseless.

    Returns
    -------
    dict
        ``strong_errors`` (symbol errors over both strong-user decisions),
        ``weak_errors``, ``max_fold_error`` (largest distance between the
        folded, gain-normalized strong-user sample and the superposed
        symbol) and ``status``.
    """
    sca = sca or ScaConfig()
    population = generate_population(cfg, seed)
    assignment, design, _ = _design(population, cfg, sca)
    W, P = design.beams, design.powers
    if method == "thp-joint":
        sol = solve_joint(assignment, cfg, sca, init=init_alpha(assignment, cfg, W, P))
        W, P = sol.beams, sol.powers
    const = make_qam(qam_order)
    rng = np.random.default_rng([seed, 1])
    n_c = len(W)
    d1 = rng.integers(0, qam_order, size=(frames, n_c))
    d2 = rng.integers(0, qam_order, size=(frames, n_c))
    x = np.column_stack([superpose(const, d1[:, k], d2[:, k], P[k, 0], P[k, 1]) for k in range(n_c)])
    B = np.array([superposition_modulus(const, P[k, 0], P[k, 1]) for k in range(n_c)])
    x_tilde = thp_encode(x, W, assignment.strong, B)
    s = x_tilde @ W
    # y[:, k] = h_k^H s
    y1 = s @ assignment.strong.conj().T
    y2 = s @ assignment.weak.conj().T
    if snr_db is not None:
        noise_var = cfg.total_power / 10 ** (snr_db / 10)
        scale = np.sqrt(noise_var / 2)
        y1 = y1 + scale * (rng.standard_normal(y1.shape) + 1j * rng.standard_normal(y1.shape))
        y2 = y2 + scale * (rng.standard_normal(y2.shape) + 1j * rng.standard_normal(y2.shape))
    strong_errors = weak_errors = 0
    fold_error = 0.0
    for k in range(n_c):
        g1 = np.vdot(assignment.strong[k], W[k])
        g2 = np.vdot(assignment.weak[k], W[k])
        folded = mods_array(y1[:, k] / g1, B[k])[0]
        fold_error = max(fold_error, float(np.max(np.abs(folded - x[:, k]))))
        d2_hat, d1_hat = receive_strong(y1[:, k], g1, B[k], const, P[k, 0], P[k, 1])
        strong_errors += int(np.sum(d1_hat != d1[:, k]) + np.sum(d2_hat != d2[:, k]))
        weak_errors += _weak_errors(y2[:, k], g2, B[k], const, P[k], d2[:, k])
    return {"strong_errors": strong_errors, "weak_errors": weak_errors, "max_fold_error": fold_error, "status": "ok"}


def _weak_errors(y, gain, B, const, powers, truth):
    if powers[1] <= 0:
        return len(truth)
    try:
        return int(np.sum(receive_weak(y, gain, B, const, powers[0], powers[1]) != truth))
    except AmbiguousDecodeError:
        # decide sample by sample; a tie counts as an error
        errors = 0
        for yi, ti in zip(y, truth):
            try:
                errors += int(receive_weak(yi, gain, B, const, powers[0], powers[1])[0] != ti)
            except AmbiguousDecodeError:
                errors += 1
        return errors


def _symbol_task(args):
    cfg, seed, trial, frames, qam, method, sca, snr_db = args
    try:
        out = symbol_trial(cfg, seed, frames, qam, method, sca, snr_db)
    except ThpNomaError as exc:
        log.warning("seed %d: symbol check failed: %s", seed, exc)
        out = {"strong_errors": -1, "weak_errors": -1, "max_fold_error": np.nan,
               "status": f"error: {type(exc).__name__}: {exc}"}
    return SymbolRow("symbol-check", method, trial, seed, frames, **out)


def run_symbol_check(config):
    """Noiseless (or fixed-SNR) link simulation for every trial."""
    sca = config.sca_config()
    cfg = config.system_config(config.eta_snr_db)
    tasks = [
        (cfg, config.seed + t, t, config.frames, config.qam_order, config.symbol_method, sca, config.symbol_snr_db)
        for t in range(config.trials)
    ]
    return _map(_symbol_task, tasks, config.workers)


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return "" if np.isnan(value) else f"{value:.10g}"
    return str(value)


def write_csv(rows, fh, columns=None):
    """Write ``rows`` (dataclasses) after a schema-version comment line."""
    if not rows and columns is None:
        columns = RATE_COLUMNS
    columns = columns or tuple(asdict(rows[0]))
    fh.write(f"# thp-noma results schema {SCHEMA_VERSION}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        d = asdict(r)
        writer.writerow([_fmt(d[c]) for c in columns])


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` as dicts of strings."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# thp-noma results schema"):
            raise ValueError(f"{path}: missing schema line")
        return list(csv.DictReader(fh))


def summarize(rows):
    """Mean sum rates per (method, sweep value) over successful trials."""
    groups = {}
    for r in rows:
        if r.status != "ok":
            continue
        groups.setdefault((r.method, r.value), []).append((r.sum_strong, r.sum_weak, r.sum_total))
    return {key: tuple(np.mean(v, axis=0)) for key, v in sorted(groups.items())}
