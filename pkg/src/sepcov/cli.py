"""Command-line front end: data generation, fitting, comparison, diagnostics.

Observation layout: one observation per CSV row with ``d1 * d2`` columns in
column-major factor order, i.e. column ``j * d2 + k`` holds entry ``(k, j)``
of the underlying ``d2 x d1`` data matrix (the second-factor index varies
fastest). All outputs are deterministic functions of (config, seed).

Exit codes: 0 success, 2 configuration error, 3 data/I-O error,
4 comparison-threshold failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .diagnostics import SummaryRecord, acf, ess, summarize, two_sample_ks
from .kron import vech
from .errors import ConfigError, SepcovError
from .metrics import MetricKind
from .model import (SeparableState, ReferencePrior, ShrinkageInverseWishartPrior,
                    dataset_from_observations, default_generation_prior,
                    default_inference_prior, flipflop_mle, observations_matrix_normal,
                    sample_inverse_wishart, siw_moment_matched_constants)
from .samplers import (DynamicSteps, FixedSteps, SamplerConfig, TargetDensity,
                       Tempering, run_chain)

CHAINS_SCHEMA = "sepcov-chains-v1"
DATA_SCHEMA = "sepcov-data-v1"
SPD_SCHEMA = "sepcov-spd-v1"
ACF_SCHEMA = "sepcov-acf-v1"
STATES_SCHEMA = "sepcov-states-v1"

CHAIN_COLUMNS = ["iter", "accepted", "epsilon", "L_used"] + SummaryRecord.column_names()


@dataclasses.dataclass
class RunConfig:
    """Everything one experiment needs; JSON file keys map 1:1 onto fields."""

    seed: int = 0
    d1: int = 15
    d2: int = 6
    n: int = 300
    gamma: float = 5.0
    sampler: str = "sglmc"
    metric: str = "regularized"
    alpha: float = 0.95
    omega: float = 0.5
    prior1: str = "iw"
    prior2: str = "iw"
    n_adapt: int = 500
    n_burn: int = 500
    n_samples: int = 2000
    leapfrog: int = 10
    l_max: int | None = None
    epsilon0: float = 0.1
    target_accept: float = 0.8
    tempering_chains: int = 0
    tempering_c1: float = 0.5

    def metric_kind(self) -> MetricKind:
        if self.metric == "regularized":
            return MetricKind.regularized(self.alpha)
        if self.metric == "orthogonalized":
            return MetricKind.orthogonalized()
        if self.metric == "weighted":
            return MetricKind.weighted(self.omega)
        if self.metric == "product":
            return MetricKind.product()
        raise ConfigError(f"unknown metric {self.metric!r}")

    def prior(self, which: str, d: int):
        name = getattr(self, which)
        if name == "iw":
            return default_inference_prior(d, self.gamma)
        if name == "siw":
            a, c = siw_moment_matched_constants(self.gamma, d)
            return ShrinkageInverseWishartPrior(a=a, c=c)
        if name == "reference":
            return ReferencePrior()
        raise ConfigError(f"unknown prior {name!r} for {which}")

    def sampler_config(self) -> SamplerConfig:
        policy = DynamicSteps(self.l_max) if self.l_max else FixedSteps(self.leapfrog)
        tempering = (Tempering(n_chains=self.tempering_chains, c1=self.tempering_c1)
                     if self.tempering_chains else None)
        return SamplerConfig(n_adapt=self.n_adapt, n_burn=self.n_burn,
                             n_samples=self.n_samples, leapfrog=policy,
                             epsilon0=self.epsilon0, target_accept=self.target_accept,
                             seed=self.seed, tempering=tempering, sampler=self.sampler)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    if path:
        with open(path) as fh:
            values.update(json.load(fh))
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**values)
    if cfg.d1 < 1 or cfg.d2 < 1 or cfg.n < 1:
        raise ConfigError("d1, d2, n must be positive")
    if not 0 <= cfg.alpha < 1:
        raise ConfigError(f"alpha must be in [0, 1), got {cfg.alpha}")
    if not 0 < cfg.omega < 1:
        raise ConfigError(f"omega must be in (0, 1), got {cfg.omega}")
    if not 0 < cfg.target_accept < 1:
        raise ConfigError(f"target_accept must be in (0, 1), got {cfg.target_accept}")
    return cfg


# ---------------------------------------------------------------------------
# File formats


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix_csv(path: Path, m: np.ndarray, schema: str, meta: str = "") -> None:
    lines = [f"# {schema}{(' ' + meta) if meta else ''}"]
    for row in np.atleast_2d(m):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv_with_meta(path: Path) -> tuple[np.ndarray, dict]:
    meta: dict = {}
    rows = []
    header: list[str] | None = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts:
                    meta["schema"] = parts[0]
                    for p in parts[1:]:
                        if "=" in p:
                            k, v = p.split("=", 1)
                            meta[k] = v
                continue
            cells = line.split(",")
            if header is None and any(not _is_number(c) for c in cells):
                header = cells
                continue
            rows.append([float(c) for c in cells])
    meta["columns"] = header
    return np.array(rows), meta


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_chains_csv(path: Path, samples, records: list[SummaryRecord]) -> None:
    lines = [f"# {CHAINS_SCHEMA}", ",".join(CHAIN_COLUMNS)]
    for it, (s, rec) in enumerate(zip(samples, records)):
        cells = [str(it), str(int(s.accepted)), _fmt(s.epsilon), str(s.l_used)]
        cells += [_fmt(v) for v in rec.as_tuple()]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def read_chains_csv(path: Path) -> tuple[np.ndarray, list[str]]:
    data, meta = read_csv_with_meta(path)
    if meta.get("schema") != CHAINS_SCHEMA:
        raise SepcovError(f"{path}: expected schema {CHAINS_SCHEMA}, got {meta.get('schema')}")
    if meta.get("columns") != CHAIN_COLUMNS:
        raise SepcovError(f"{path}: column set does not match schema {CHAINS_SCHEMA}")
    return data, CHAIN_COLUMNS


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(cfg: RunConfig, out_dir: Path) -> int:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    prior1 = default_generation_prior(cfg.d1, cfg.gamma)
    prior2 = default_generation_prior(cfg.d2, cfg.gamma)
    truth = SeparableState(
        sigma1=sample_inverse_wishart(prior1.nu, prior1.scale, rng),
        sigma2=sample_inverse_wishart(prior2.nu, prior2.scale, rng),
    )
    ys = observations_matrix_normal(truth, cfg.n, rng)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = f"d1={cfg.d1} d2={cfg.d2} n={cfg.n} seed={cfg.seed}"
    write_matrix_csv(out_dir / "data.csv", ys, DATA_SCHEMA, meta)
    write_matrix_csv(out_dir / "sigma1_true.csv", truth.sigma1.m, SPD_SCHEMA, f"d={cfg.d1}")
    write_matrix_csv(out_dir / "sigma2_true.csv", truth.sigma2.m, SPD_SCHEMA, f"d={cfg.d2}")
    print(f"wrote {cfg.n} observations of dimension {cfg.d1 * cfg.d2} to {out_dir / 'data.csv'}")
    return 0


def cmd_fit(cfg: RunConfig, input_path: Path, out_dir: Path, *,
            dump_states: bool = False) -> int:
    ys, meta = read_csv_with_meta(input_path)
    d1 = int(meta.get("d1", cfg.d1))
    d2 = int(meta.get("d2", cfg.d2))
    if ys.ndim != 2 or ys.shape[1] != d1 * d2:
        raise SepcovError(f"{input_path}: {ys.shape} incompatible with d1={d1}, d2={d2}")
    data = dataset_from_observations(ys, d1, d2)
    target = TargetDensity(data=data, prior1=cfg.prior("prior1", d1),
                           prior2=cfg.prior("prior2", d2), metric=cfg.metric_kind())
    init = flipflop_mle(ys, d1, d2)
    t0 = time.perf_counter()
    samples = run_chain(cfg.sampler_config(), target, init)
    wall = time.perf_counter() - t0
    records = [summarize(s.state) for s in samples]
    out_dir.mkdir(parents=True, exist_ok=True)
    write_chains_csv(out_dir / "chains.csv", samples, records)
    if dump_states:
        rows = np.array([np.concatenate([vech(s.state.sigma1.m), vech(s.state.sigma2.m)])
                         for s in samples]) if samples else np.zeros((0, 0))
        write_matrix_csv(out_dir / "states.csv", rows, STATES_SCHEMA,
                         f"d1={d1} d2={d2} layout=vech(sigma1),vech(sigma2)")

    stats = {name: np.array([getattr(r, name) for r in records])
             for name in SummaryRecord.column_names()}
    n = max(len(samples), 1)
    ess_by_stat = {k: (ess(v) if len(v) >= 10 else None) for k, v in stats.items()}
    summary = {
        "sampler": cfg.sampler,
        "metric": cfg.metric,
        "n_samples": len(samples),
        "acceptance_rate": float(np.mean([s.accepted for s in samples])) if samples else None,
        "epsilon_final": samples[-1].epsilon if samples else None,
        "ess": {k: _json_num(v) for k, v in ess_by_stat.items()},
        "ess_per_iter": {k: _json_num(v / n if v is not None else None)
                         for k, v in ess_by_stat.items()},
        "wall_time_s": wall,
        "init_converged": init.converged,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n")
    print(f"wrote {len(samples)} samples to {out_dir / 'chains.csv'}")
    return 0


def _json_num(v):
    if v is None:
        return None
    v = float(v)
    return None if not math.isfinite(v) else v


def cmd_compare(chains_a: Path, chains_b: Path, stats: list[str] | None,
                ks_threshold: float | None, out_path: Path | None) -> int:
    data_a, cols = read_chains_csv(chains_a)
    data_b, _ = read_chains_csv(chains_b)
    requested = stats or SummaryRecord.column_names()
    bad = [s for s in requested if s not in cols]
    if bad:
        raise SepcovError(f"statistics not in chains schema: {bad}")
    report: dict = {"a": str(chains_a), "b": str(chains_b), "ks": {},
                    "ess_per_iter_a": {}, "ess_per_iter_b": {}}
    failures = []
    for name in requested:
        col = cols.index(name)
        a, b = data_a[:, col], data_b[:, col]
        k = two_sample_ks(a, b)
        report["ks"][name] = k
        report["ess_per_iter_a"][name] = _json_num(ess(a) / a.size if a.size >= 10 else None)
        report["ess_per_iter_b"][name] = _json_num(ess(b) / b.size if b.size >= 10 else None)
        if ks_threshold is not None and k > ks_threshold:
            failures.append(name)
    report["ks_threshold"] = ks_threshold
    report["ks_failures"] = failures
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    if out_path:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text)
    else:
        sys.stdout.write(text)
    return 4 if failures else 0


def cmd_diagnose(input_path: Path, stat: str, max_lag: int, out_dir: Path) -> int:
    data, cols = read_chains_csv(input_path)
    if stat not in cols:
        raise SepcovError(f"statistic {stat!r} not in chains schema")
    series = data[:, cols.index(stat)]
    rho = acf(series, max_lag)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / f"acf_{stat}.csv"
    lines = [f"# {ACF_SCHEMA} stat={stat}", "lag,acf"]
    lines += [f"{lag},{_fmt(v)}" for lag, v in enumerate(rho)]
    out.write_text("\n".join(lines) + "\n")
    e = ess(series) if series.size >= 10 else None
    print(f"wrote {out}; ess={_json_num(e)}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--d1", type=int)
    p.add_argument("--d2", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sampler", choices=["sglmc", "gibbs"])
    p.add_argument("--metric", choices=["regularized", "orthogonalized", "weighted", "product"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--prior1", choices=["iw", "siw", "reference"])
    p.add_argument("--prior2", choices=["iw", "siw", "reference"])
    p.add_argument("--n-adapt", dest="n_adapt", type=int)
    p.add_argument("--n-burn", dest="n_burn", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--leapfrog", type=int, help="fixed leapfrog step count")
    p.add_argument("--l-max", dest="l_max", type=int,
                   help="enable dynamic termination with this step cap")
    p.add_argument("--epsilon0", type=float)
    p.add_argument("--target-accept", dest="target_accept", type=float)
    p.add_argument("--tempering-chains", dest="tempering_chains", type=int)
    p.add_argument("--tempering-c1", dest="tempering_c1", type=float)


_CONFIG_KEYS = [f.name for f in dataclasses.fields(RunConfig)]


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepcov",
        description="Bayesian inference for Kronecker-separable covariance matrices.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate synthetic observations plus ground truth")
    _add_config_flags(p_gen)
    p_gen.add_argument("--out", required=True, help="output directory")

    p_fit = sub.add_parser("fit", help="run a sampler on a data CSV")
    _add_config_flags(p_fit)
    p_fit.add_argument("--input", required=True, help="observations CSV")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.add_argument("--dump-states", dest="dump_states", action="store_true",
                       help="also write retained factor matrices as vech rows")

    p_cmp = sub.add_parser("compare", help="KS and ESS/it comparison of two chains CSVs")
    p_cmp.add_argument("chains_a")
    p_cmp.add_argument("chains_b")
    p_cmp.add_argument("--stat", action="append", dest="stats",
                       help="statistic column (repeatable; default: all)")
    p_cmp.add_argument("--ks-threshold", dest="ks_threshold", type=float)
    p_cmp.add_argument("--out", help="report JSON path (default: stdout)")

    p_diag = sub.add_parser("diagnose", help="dump the autocorrelation of one statistic")
    p_diag.add_argument("--input", required=True, help="chains CSV")
    p_diag.add_argument("--stat", required=True)
    p_diag.add_argument("--max-lag", dest="max_lag", type=int, default=40)
    p_diag.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(_config_from_args(args), Path(args.out))
        if args.command == "fit":
            return cmd_fit(_config_from_args(args), Path(args.input), Path(args.out),
                           dump_states=args.dump_states)
        if args.command == "compare":
            return cmd_compare(Path(args.chains_a), Path(args.chains_b), args.stats,
                               args.ks_threshold, Path(args.out) if args.out else None)
        if args.command == "diagnose":
            return cmd_diagnose(Path(args.input), args.stat, args.max_lag, Path(args.out))
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, SepcovError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
