#!/usr/bin/env python3
"""Batch figure rendering from sepcov chains CSV files.

Consumes the ``sepcov-chains-v1`` CSV schema produced by ``sepcov fit`` and
renders one figure per invocation, overlaying one curve per input file:

    plots.py --csv a.csv [--csv b.csv] --stat tr_kron --kind density --out fig.png
    plots.py --csv a.csv --stat tr_kron --kind acf --max-lag 40 --out acf.png
    plots.py --csv a.csv --csv b.csv --kind eigen-compare --out scatter.png

The plotter never re-derives chain statistics from states; it reads the
summary columns as-is. The only computations done here are kernel density
smoothing (Gaussian kernel, Scott's rule bandwidth) and the autocorrelation
of a plotted column (biased 1/n estimator, identical to the sampler
package's diagnostics; ``--dump-csv`` writes the plotted curve values so the
agreement can be checked mechanically).

Exit codes: 0 success, 2 bad arguments, 3 unreadable/mismatched input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CHAINS_SCHEMA = "sepcov-chains-v1"
CHAIN_COLUMNS = ["iter", "accepted", "epsilon", "L_used",
                 "tr1", "tr2", "tr_kron", "logdet1", "logdet2", "logdet_kron",
                 "cond1", "cond2"]


class InputError(Exception):
    pass


def read_chains(path: Path) -> np.ndarray:
    """Load a chains CSV, enforcing the schema version and column set."""
    rows = []
    schema = None
    header = None
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            schema = line[1:].split()[0] if line[1:].split() else None
            continue
        cells = line.split(",")
        if header is None:
            header = cells
            continue
        rows.append([float(c) for c in cells])
    if schema != CHAINS_SCHEMA:
        raise InputError(f"{path}: expected schema {CHAINS_SCHEMA}, found {schema!r}")
    if header != CHAIN_COLUMNS:
        raise InputError(f"{path}: column header does not match {CHAINS_SCHEMA}")
    if not rows:
        raise InputError(f"{path}: no samples")
    return np.asarray(rows)


def column(data: np.ndarray, stat: str) -> np.ndarray:
    if stat not in CHAIN_COLUMNS:
        raise InputError(f"statistic {stat!r} not in the chains schema")
    return data[:, CHAIN_COLUMNS.index(stat)]


def gaussian_kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian kernel density with Scott's rule bandwidth."""
    n = values.size
    sd = values.std(ddof=1)
    if sd == 0.0:
        out = np.zeros_like(grid)
        out[np.argmin(np.abs(grid - values[0]))] = 1.0
        return out
    bw = sd * n ** (-1.0 / 5.0)
    z = (grid[:, None] - values[None, :]) / bw
    return np.exp(-0.5 * z * z).sum(axis=1) / (n * bw * np.sqrt(2 * np.pi))


def autocorrelation(values: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased (1/n) autocovariance normalized by lag zero; acf[0] = 1."""
    x = np.asarray(values, float)
    n = x.size
    if n <= max_lag:
        raise InputError(f"series of length {n} too short for max_lag {max_lag}")
    xc = x - x.mean()
    nfft = 1 << int(np.ceil(np.log2(max(2 * n, 2))))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    if acov[0] <= 0:
        out = np.zeros(max_lag + 1)
        out[0] = 1.0
        return out
    return acov / acov[0]


def render(csv_paths: list[Path], stat: str, kind: str, out: Path,
           max_lag: int, dump_csv: Path | None) -> None:
    datasets = [(p, read_chains(p)) for p in csv_paths]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    dump_rows: list[tuple[str, np.ndarray, np.ndarray]] = []

    if kind == "density":
        for path, data in datasets:
            vals = column(data, stat)
            lo, hi = vals.min(), vals.max()
            pad = 0.1 * max(hi - lo, 1e-12)
            grid = np.linspace(lo - pad, hi + pad, 512)
            dens = gaussian_kde(vals, grid)
            ax.plot(grid, dens, label=path.stem)
            dump_rows.append((path.stem, grid, dens))
        ax.set_xlabel(stat)
        ax.set_ylabel("density")
        ax.set_title(f"posterior density of {stat}")
    elif kind == "acf":
        for path, data in datasets:
            vals = column(data, stat)
            rho = autocorrelation(vals, max_lag)
            lags = np.arange(max_lag + 1)
            ax.plot(lags, rho, marker="o", markersize=3, label=path.stem)
            dump_rows.append((path.stem, lags.astype(float), rho))
        ax.axhline(0.0, color="grey", linewidth=0.8)
        ax.set_xlabel("lag")
        ax.set_ylabel("autocorrelation")
        ax.set_title(f"ACF of {stat}")
    elif kind == "eigen-compare":
        for path, data in datasets:
            c1 = column(data, "cond1")
            c2 = column(data, "cond2")
            ax.scatter(c1, c2, s=6, alpha=0.4, label=path.stem)
            dump_rows.append((path.stem, c1, c2))
        ax.set_xlabel("condition number, factor 1")
        ax.set_ylabel("condition number, factor 2")
        ax.set_title("eigenvalue spread comparison")
    else:
        raise InputError(f"unknown figure kind {kind!r}")

    ax.legend()
    fig.tight_layout()
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=130)
    plt.close(fig)

    if dump_csv is not None:
        lines = [f"# sepcov-plots-dump kind={kind} stat={stat}", "label,x,y"]
        for label, xs, ys in dump_rows:
            lines += [f"{label},{x:.17g},{y:.17g}" for x, y in zip(xs, ys)]
        dump_csv.parent.mkdir(parents=True, exist_ok=True)
        dump_csv.write_text("\n".join(lines) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--csv", action="append", required=True, type=Path,
                        help="chains CSV (repeat to overlay)")
    parser.add_argument("--stat", default="tr_kron", help="statistic column to plot")
    parser.add_argument("--kind", required=True,
                        choices=["density", "acf", "eigen-compare"])
    parser.add_argument("--out", required=True, type=Path, help="output image path")
    parser.add_argument("--max-lag", type=int, default=40)
    parser.add_argument("--dump-csv", type=Path, default=None,
                        help="also write the plotted curve values to this CSV")
    args = parser.parse_args(argv)
    if args.max_lag < 1:
        print("max-lag must be positive", file=sys.stderr)
        return 2
    try:
        render(args.csv, args.stat, args.kind, args.out, args.max_lag, args.dump_csv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
