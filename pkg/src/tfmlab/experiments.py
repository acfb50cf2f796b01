"""Monte-Carlo sweep experiments with deterministic CSV output.

Sweeps share the mempool stream across grid points (common random numbers),
so per-point estimates move smoothly along the grid.  For the randomized
two-set mechanism the branch tosses are additionally stratified across runs
by default: each grid value sees branch counts exactly proportional to its
bias, an unbiased variance-reduction that leaves per-run mechanics untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .alloc import allocation_value, optimal_allocate
from .errors import ConfigError, ParameterError
from .mech import AllocationKind, MechanismSpec, run_mechanism, spec_from_config
from .txpool import BidDistribution, parse_distribution, sample_mempool

CSV_HEADER = "sweep_value,normalized_revenue,revenue_stderr,zero_fee_fraction,zff_stderr,cof,zfi"


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: MechanismSpec
    n: int = 1000
    capacity: float = 100.0
    bid_dist: BidDistribution = field(default_factory=lambda: BidDistribution.censored_gaussian(4, 3))
    size_dist: BidDistribution = field(default_factory=lambda: BidDistribution.constant(1))
    sweep_param: str = "phi"
    sweep_values: Tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))
    runs: int = 1000
    seed: int = 0
    output_path: str = ""
    size_ratio: float = 10.0
    stratified_toss: bool = True

    def __post_init__(self) -> None:
        if not self.sweep_values:
            raise ConfigError("sweep_values must be non-empty")
        if any(not math.isfinite(v) for v in self.sweep_values):
            raise ConfigError("sweep_values must be finite")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.sweep_param not in ("phi", "gamma", "size_ratio"):
            raise ConfigError(f"unknown sweep_param {self.sweep_param!r}")


@dataclass(frozen=True)
class SweepRow:
    sweep_value: float
    normalized_miner_revenue: float
    revenue_stderr: float
    zero_fee_fraction: float
    zff_stderr: float
    empirical_cof: float
    zfi: float
    zero_payment_fraction: float = 0.0


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, se


def run_rtfm_sweep(cfg: ExperimentConfig) -> List[SweepRow]:
    """Sweep the branch bias of the randomized two-set mechanism.

    Each run draws a fresh mempool and evaluates both branches once; a grid
    value then mixes the per-run branch outcomes according to its toss
    pattern.  Normalized revenue is miner utility over the exact optimum for
    that run's pool; the zero-fee fraction counts confirmed zero-bid
    transactions against the mempool size.
    """
    if cfg.mechanism.allocation is not AllocationKind.RTFM:
        raise ConfigError("run_rtfm_sweep needs a randomized two-set mechanism")
    if cfg.sweep_param != "phi":
        raise ConfigError("run_rtfm_sweep sweeps phi")

    runs = cfg.runs
    per_run: List[Dict[str, float]] = []
    for r in range(runs):
        m = sample_mempool(cfg.n, cfg.bid_dist, cfg.size_dist, seed=[cfg.seed, r])
        opt_value = allocation_value(m, optimal_allocate(m, cfg.capacity, exact=False))
        stats: Dict[str, float] = {}
        for branch in (0, 1):
            out = run_mechanism(cfg.mechanism, m, cfg.capacity, seed=[cfg.seed, r], rtfm_toss=branch)
            sel = out.allocation.selected_set
            zero_count = sum(1 for tx in m if tx.bid == 0 and tx.id in sel)
            zero_size = sum(tx.size for tx in m if tx.bid == 0 and tx.id in sel)
            zero_pay = sum(1 for t in sel if out.payment_per_unit[t] == 0)
            total = out.allocation.total_size
            tag = "rand" if branch == 0 else "opt"
            stats[f"norm_{tag}"] = out.miner_utility / opt_value if opt_value > 0 else 0.0
            stats[f"zff_{tag}"] = zero_count / cfg.n if cfg.n else 0.0
            stats[f"zfi_{tag}"] = zero_size / total if total > 0 else 0.0
            stats[f"zpf_{tag}"] = zero_pay / cfg.n if cfg.n else 0.0
        per_run.append(stats)

    toss_rng = np.random.default_rng([cfg.seed, 7])
    rows: List[SweepRow] = []
    for idx, phi in enumerate(cfg.sweep_values):
        if not 0 <= phi <= 1:
            raise ConfigError(f"phi sweep values must lie in [0, 1], got {phi}")
        if cfg.stratified_toss:
            is_rand = np.array([(r + 0.5) / runs < phi for r in range(runs)])
        else:
            is_rand = toss_rng.random(runs) < phi
        tags = np.where(is_rand, 0, 1)
        norm = np.array([per_run[r]["norm_rand" if t == 0 else "norm_opt"] for r, t in enumerate(tags)])
        zff = np.array([per_run[r]["zff_rand" if t == 0 else "zff_opt"] for r, t in enumerate(tags)])
        zfi = np.array([per_run[r]["zfi_rand" if t == 0 else "zfi_opt"] for r, t in enumerate(tags)])
        zpf = np.array([per_run[r]["zpf_rand" if t == 0 else "zpf_opt"] for r, t in enumerate(tags)])
        norm_mean, norm_se = _mean_se(norm)
        zff_mean, zff_se = _mean_se(zff)
        cof = 1.0 / norm_mean if norm_mean > 0 else math.inf
        rows.append(SweepRow(phi, norm_mean, norm_se, zff_mean, zff_se, cof,
                             float(zfi.mean()), float(zpf.mean())))
    return rows


def _stfm_cell(cfg: ExperimentConfig, value: float) -> SweepRow:
    gamma = value if cfg.sweep_param == "gamma" else cfg.mechanism.gamma
    ratio = value if cfg.sweep_param == "size_ratio" else cfg.size_ratio
    if not gamma or gamma <= 0:
        raise ConfigError("softmax sweep needs a positive gamma")
    if ratio <= 0:
        raise ConfigError("size ratio must be positive")
    cofs = np.empty(cfg.runs)
    norms = np.empty(cfg.runs)
    zffs = np.empty(cfg.runs)
    zfis = np.empty(cfg.runs)
    zpfs = np.empty(cfg.runs)
    spec = replace(cfg.mechanism, gamma=gamma)
    for r in range(cfg.runs):
        m = sample_mempool(cfg.n, cfg.bid_dist, cfg.size_dist, seed=[cfg.seed, r])
        capacity = m.total_size() / ratio
        out = run_mechanism(spec, m, capacity, seed=[cfg.seed, r, 1])
        greedy_value = allocation_value(m, optimal_allocate(m, capacity, exact=False))
        sel = out.allocation.selected_set
        total = out.allocation.total_size
        zero_size = sum(tx.size for tx in m if tx.bid == 0 and tx.id in sel)
        zero_count = sum(1 for tx in m if tx.bid == 0 and tx.id in sel)
        zero_pay = sum(1 for t in sel if out.payment_per_unit[t] == 0)
        util = out.miner_utility
        cofs[r] = greedy_value / util if util > 0 else math.inf
        norms[r] = util / greedy_value if greedy_value > 0 else 0.0
        zfis[r] = zero_size / total if total > 0 else 0.0
        zffs[r] = zero_count / cfg.n if cfg.n else 0.0
        zpfs[r] = zero_pay / cfg.n if cfg.n else 0.0
    norm_mean, norm_se = _mean_se(norms)
    zff_mean, zff_se = _mean_se(zffs)
    return SweepRow(value, norm_mean, norm_se, zff_mean, zff_se,
                    float(cofs.mean()), float(zfis.mean()), float(zpfs.mean()))


def run_stfm_sweep(cfg: ExperimentConfig, jobs: int = 1) -> List[SweepRow]:
    """Sweep temperature (or pool-to-block size ratio) for the softmax rule.

    Per run the pool is drawn fresh, capacity is total pool size over the
    ratio, and the empirical cost of fairness is the greedy revenue over the
    softmax revenue.  The zero-fee inclusion measure is the share of realized
    block size occupied by zero-bid transactions.  Cells are independent;
    with ``jobs > 1`` they run on a thread pool, and rows always come back
    in sweep order.
    """
    if cfg.mechanism.allocation is not AllocationKind.SOFTMAX:
        raise ConfigError("run_stfm_sweep needs a softmax mechanism")
    if cfg.sweep_param not in ("gamma", "size_ratio"):
        raise ConfigError("run_stfm_sweep sweeps gamma or size_ratio")
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda v: _stfm_cell(cfg, v), cfg.sweep_values))
    return [_stfm_cell(cfg, value) for value in cfg.sweep_values]


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".9g")


def emit_csv(rows: Sequence[SweepRow], path: str) -> None:
    """Write the sweep table; identical config and seed give identical bytes."""
    try:
        with open(path, "w", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in (
                    row.sweep_value, row.normalized_miner_revenue, row.revenue_stderr,
                    row.zero_fee_fraction, row.zff_stderr, row.empirical_cof, row.zfi,
                )) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write sweep CSV to {path}: {exc}") from exc


def plot_data_table(rows: Sequence[SweepRow]) -> str:
    """Gnuplot-friendly whitespace table, including the zero-payment column."""
    lines = ["# sweep_value normalized_revenue revenue_stderr zero_fee_fraction "
             "zff_stderr cof zfi zero_payment_fraction"]
    for row in rows:
        lines.append(" ".join(_fmt(v) for v in (
            row.sweep_value, row.normalized_miner_revenue, row.revenue_stderr,
            row.zero_fee_fraction, row.zff_stderr, row.empirical_cof, row.zfi,
            row.zero_payment_fraction,
        )))
    return "\n".join(lines) + "\n"


_MECH_KEYS = {"allocation", "payment", "burning", "gamma", "phi", "lambda", "alpha", "delta"}
_EXP_KEYS = {"n", "capacity", "bids", "sizes", "sweep_param", "sweep_values", "runs", "seed",
             "out", "size_ratio", "stratified_toss"}
# audit-only keys ride along in the same file format
_AUDIT_KEYS = {"property", "trials", "target_tx", "user", "epsilons", "bid_grid",
               "fake_budget", "fake_bid_grid", "alpha_target", "phi_ratio",
               "gamma_lo", "gamma_hi"}


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat ``key = value`` lines; comments with '#'; unknown keys rejected."""
    fields: Dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in fields:
            raise ConfigError(f"duplicate config key {key!r}")
        fields[key] = value
    unknown = set(fields) - _MECH_KEYS - _EXP_KEYS - _AUDIT_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return fields


def experiment_from_fields(fields: Dict[str, str]) -> ExperimentConfig:
    sweep_param = fields.get("sweep_param", "phi")
    sweep_values: Tuple[float, ...]
    if "sweep_values" in fields:
        try:
            sweep_values = tuple(float(v) for v in fields["sweep_values"].split(",") if v.strip())
        except ValueError as exc:
            raise ConfigError(f"malformed sweep_values {fields['sweep_values']!r}") from exc
    else:
        sweep_values = ExperimentConfig.__dataclass_fields__["sweep_values"].default

    mech_lines = [f"{k}={fields[k]}" for k in _MECH_KEYS if k in fields]
    mech_fields = {k: fields[k] for k in _MECH_KEYS if k in fields}
    # when the swept parameter defines the mechanism, seed it from the grid
    if mech_fields.get("allocation") == "rtfm" and "phi" not in mech_fields and sweep_param == "phi":
        mech_lines.append(f"phi={sweep_values[0]}")
    if mech_fields.get("allocation") == "softmax" and "gamma" not in mech_fields and sweep_param == "gamma":
        mech_lines.append(f"gamma={sweep_values[0]}")
    mechanism = spec_from_config("\n".join(mech_lines) + "\n")

    try:
        return ExperimentConfig(
            mechanism=mechanism,
            n=int(fields.get("n", 1000)),
            capacity=float(fields.get("capacity", 100.0)),
            bid_dist=parse_distribution(fields["bids"]) if "bids" in fields
            else BidDistribution.censored_gaussian(4, 3),
            size_dist=parse_distribution(fields["sizes"]) if "sizes" in fields
            else BidDistribution.constant(1),
            sweep_param=sweep_param,
            sweep_values=sweep_values,
            runs=int(fields.get("runs", 1000)),
            seed=int(fields.get("seed", 0)),
            output_path=fields.get("out", ""),
            size_ratio=float(fields.get("size_ratio", 10.0)),
            stratified_toss=fields.get("stratified_toss", "true").lower() != "false",
        )
    except (ValueError, ParameterError) as exc:
        raise ConfigError(str(exc)) from exc


def load_experiment_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return experiment_from_fields(parse_config_text(fh.read()))
