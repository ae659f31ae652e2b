"""Command-line front end: CSV ingestion, sampler dispatch and result tables.

``bvselect run`` samples and writes one row per covariate (name, PIP,
conditional-on-inclusion coefficient mean and sd) followed by a summary
block; ``bvselect oracle`` writes exact PIPs for small problems.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .core import (BVSError, ConfigError, Dataset, DomainError, EmptyChain, Likelihood,
                   NumericalError, QuadratureNotConverged, SamplerConfig, ShapeMismatch, TooLarge,
                   Variant, validate)
from .estimators import diagnostics

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

#: column order of the results table
RESULT_COLUMNS = ("name", "pip", "beta_mean", "beta_sd")


class ParseError(BVSError, ValueError):
    """A cell is not a finite number or a row has the wrong length."""


class MissingColumn(BVSError, KeyError):
    """A column named on the command line is not in the header."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


def _sniff_delimiter(header_line):
    return "\t" if header_line.count("\t") > header_line.count(",") else ","


def read_table(path):
    """Header and float matrix of a comma- or tab-delimited file."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.strip():
            raise ParseError(f"{path}: empty file or missing header")
        delim = _sniff_delimiter(first)
        fh.seek(0)
        rows = list(csv.reader(fh, delimiter=delim))
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in header")
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        vals = []
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {r}, column '{header[c]}': '{cell}' is not a number") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: row {r}, column '{header[c]}': '{cell}' is not finite")
            vals.append(v)
        data.append(vals)
    if not data:
        raise ParseError(f"{path}: no data rows")
    return header, np.array(data, dtype=np.float64)


def standardize_columns(X):
    """Center and scale each column to mean 0 and (population) sd 1."""
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd == 0):
        bad = np.flatnonzero(sd == 0)
        raise DomainError(f"cannot standardize constant covariate column(s) {bad.tolist()}")
    return (X - mean) / sd


def ingest_csv(path, response, total_count=None, likelihood=Likelihood.LINEAR, standardize=False,
               psi0=None):
    """Read a delimited file into a :class:`~bvselect.core.Dataset`.

    Every column other than ``response`` and ``total_count`` becomes a
    covariate, in header order.

    :param path: input file with a header row
    :param response: name of the response column
    :param total_count: name of the binomial total-count column
    :param likelihood: ``linear``, ``binomial`` or ``negbin``
    :param standardize: center and scale covariates
    :param psi0: negative binomial log-mean offset (default from the data)
    """
    likelihood = Likelihood(likelihood)
    header, data = read_table(path)
    if response not in header:
        raise MissingColumn(f"response column '{response}' not in header {header}")
    if total_count is not None and total_count not in header:
        raise MissingColumn(f"total-count column '{total_count}' not in header {header}")
    if likelihood is Likelihood.BINOMIAL and total_count is None:
        raise ConfigError("the binomial likelihood needs --total-count")
    if likelihood is not Likelihood.BINOMIAL and total_count is not None:
        raise ConfigError("--total-count only applies to the binomial likelihood")
    skip = {response, total_count}
    cov = [j for j, h in enumerate(header) if h not in skip]
    if not cov:
        raise ParseError(f"{path}: no covariate columns")
    names = tuple(header[j] for j in cov)
    X = data[:, cov]
    if standardize:
        X = standardize_columns(X)
    Y = data[:, header.index(response)]
    if likelihood is Likelihood.BINOMIAL:
        ds = Dataset.binomial(X, Y, data[:, header.index(total_count)], names=names)
    elif likelihood is Likelihood.NEGBIN:
        ds = Dataset.negative_binomial(X, Y, psi0=psi0, names=names)
    else:
        ds = Dataset.linear(X, Y, names=names)
    validate(ds)
    return ds


def write_csv(dataset, path, response="y", total_count="c"):
    """Write a dataset in the format :func:`ingest_csv` reads (``repr`` floats round-trip)."""
    names = dataset.covariate_names()
    cols = [dataset.X[:, j] for j in range(dataset.P)] + [dataset.Y]
    header = names + [response]
    if dataset.C is not None:
        cols.append(dataset.C)
        header.append(total_count)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


# -- argument handling ------------------------------------------------------------
def _common_args(p):
    p.add_argument("input", help="comma- or tab-delimited file with a header row")
    p.add_argument("--likelihood", choices=[k.value for k in Likelihood], default="linear")
    p.add_argument("--response", required=True, help="name of the response column")
    p.add_argument("--total-count", help="name of the binomial total-count column")
    p.add_argument("--h", type=float, help="prior inclusion probability (default 5/P)")
    p.add_argument("--h-alpha", type=float, help="Beta prior on h: alpha")
    p.add_argument("--h-beta", type=float, help="Beta prior on h: beta")
    p.add_argument("--tau", type=float, default=0.01, help="prior precision of coefficients")
    p.add_argument("--tau-bias", type=float, help="prior precision of the intercept")
    p.add_argument("--standardize", action="store_true", help="center and scale covariates")
    p.add_argument("--psi0", type=float, help="negative binomial log-mean offset")
    p.add_argument("--output", "-o", help="output file (default stdout)")
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")


def build_parser():
    parser = argparse.ArgumentParser(prog="bvselect",
                                     description="Bayesian variable selection by weighted tempered Gibbs sampling")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="sample the posterior and report PIPs")
    _common_args(run)
    run.add_argument("--epsilon", type=float, default=5.0, help="exploration parameter ε")
    run.add_argument("--xi", type=float, help="mass of the untempered state (adapted when unset)")
    run.add_argument("--f-omega", type=float, default=0.25, help="target visit rate of the untempered state")
    run.add_argument("--subset-size", type=int, help="subset size S (switches on subset sampling)")
    run.add_argument("--anchor-size", type=int, help="anchor set size A (default S/2)")
    run.add_argument("--iterations", type=int, default=11000, help="total iterations including burn-in")
    run.add_argument("--burn-in", type=int, default=1000)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--variant", choices=[v.value for v in Variant], default="wtgs")
    run.add_argument("--nu-rw-scale", type=float, default=0.03, help="random-walk scale of log ν")
    run.add_argument("--chains", type=int, default=1, help="independent chains to run and merge")
    run.add_argument("--trace", action="store_true", help="include per-iteration diagnostics (json)")
    orc = sub.add_parser("oracle", help="exact PIPs by enumeration (linear) or quadrature (count)")
    _common_args(orc)
    orc.add_argument("--nu", type=float, default=None, help="fixed negative binomial dispersion")
    return parser


def _prior_h(args, P):
    beta_given = args.h_alpha is not None or args.h_beta is not None
    if beta_given:
        if args.h is not None:
            raise ConfigError("--h cannot be combined with --h-alpha/--h-beta")
        if args.h_alpha is None or args.h_beta is None:
            raise ConfigError("--h-alpha and --h-beta must be given together")
        return None, (args.h_alpha, args.h_beta)
    if args.h is not None:
        return args.h, None
    return min(5.0 / P, 0.5), None


def config_from_args(args, P):
    h, h_beta = _prior_h(args, P)
    if args.chains < 1:
        raise ConfigError("--chains must be at least 1")
    if args.anchor_size is not None and args.subset_size is None:
        raise ConfigError("--anchor-size needs --subset-size")
    cfg = SamplerConfig(T=args.iterations, T_burn=args.burn_in, h=h, h_beta=h_beta, tau=args.tau,
                        tau_bias=args.tau_bias, epsilon=args.epsilon, xi=args.xi,
                        f_omega=args.f_omega, subset_size=args.subset_size,
                        anchor_size=args.anchor_size, seed=args.seed, nu_rw_scale=args.nu_rw_scale,
                        variant=args.variant, trace=args.trace)
    return cfg


# -- output -----------------------------------------------------------------------
def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return "NA" if math.isnan(v) else repr(v)
    return str(v)


def result_rows(dataset, output):
    pip = output.pip
    mean, sd = output.beta_conditional()
    return [{"name": name, "pip": float(pip[j]), "beta_mean": _num(mean[j]), "beta_sd": _num(sd[j])}
            for j, name in enumerate(dataset.covariate_names())]


def summary_record(dataset, output, config, n_chains, args):
    diag = diagnostics(output)
    rec = {
        "likelihood": dataset.kind.value,
        "N": dataset.N,
        "P": dataset.P,
        "seed": config.seed,
        "chains": n_chains,
        "weight_variance": diag["weight_variance"],
        "max_weight": diag["max_weight"],
        "omega_accept_rate": diag["omega_accept_rate"],
        "zero_state_fraction": diag["zero_state_fraction"],
        "xi_final": diag.get("xi_final"),
    }
    hs = output.h_summary()
    if hs is not None:
        rec["h_mean"] = float(hs["mean"])
        for q, v in hs["quantiles"].items():
            rec[f"h_q{int(round(q * 100)):02d}"] = float(v)
    ns = output.nu_summary()
    if ns is not None:
        rec["nu_mean"] = float(ns["mean"])
        rec["nu_sd"] = float(ns["sd"])
    if output.intercept:
        rec["intercept_mean"] = float(output.beta_mean[-1])
    if dataset.kind is Likelihood.NEGBIN:
        rec["psi0"] = dataset.psi0
    rec["config"] = {k: (v.value if isinstance(v, Variant) else v)
                     for k, v in sorted(vars(args).items()) if k not in ("command", "output")}
    return rec


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def render_tsv(rows, summary):
    lines = ["\t".join(RESULT_COLUMNS)]
    for r in rows:
        lines.append("\t".join(_fmt(r[c]) for c in RESULT_COLUMNS))
    for k, v in summary.items():
        if k == "config":
            for ck, cv in v.items():
                lines.append(f"# config.{ck}\t{_fmt(cv)}")
        else:
            lines.append(f"# {k}\t{_fmt(v)}")
    return "\n".join(lines) + "\n"


def _trace_record(trace):
    return {k: np.asarray(v).tolist() for k, v in trace.items() if k != "seconds"}


def run(args):
    """``bvselect run``: returns the exit status."""
    ds = ingest_csv(args.input, args.response, args.total_count, args.likelihood, args.standardize,
                    args.psi0)
    cfg = config_from_args(args, ds.P)
    validate(ds, cfg)
    from .sampler import run_chain, run_chains
    if args.chains == 1:
        out = run_chain(ds, cfg)
        per_chain = [out]
    else:
        workers = min(args.chains, os.cpu_count() or 1)
        out, per_chain = run_chains(ds, cfg, args.chains, workers=workers)
    rows = result_rows(ds, out)
    summary = summary_record(ds, out, cfg, args.chains, args)
    if args.format == "json":
        doc = {"columns": list(RESULT_COLUMNS), "covariates": rows, "summary": summary}
        if args.trace:
            doc["trace"] = [_trace_record(o.trace) for o in per_chain if o.trace is not None]
        _write(json.dumps(doc, indent=2) + "\n", args.output)
    else:
        _write(render_tsv(rows, summary), args.output)
    return EXIT_OK


def emit_oracle(args):
    """``bvselect oracle``: exact PIPs; returns the exit status."""
    from .oracle import enumerate_linear, quadrature_count
    ds = ingest_csv(args.input, args.response, args.total_count, args.likelihood, args.standardize,
                    args.psi0)
    h, h_beta = _prior_h(args, ds.P)
    if ds.kind is Likelihood.LINEAR:
        post = enumerate_linear(ds, h, args.tau, args.tau_bias, h_beta=h_beta)
    else:
        if h_beta is not None:
            raise ConfigError("the quadrature oracle needs a fixed h")
        if ds.kind is Likelihood.NEGBIN and args.nu is None:
            raise ConfigError("the negative binomial oracle needs --nu")
        post = quadrature_count(ds, h, args.tau, args.tau_bias, nu=args.nu)
    names = ds.covariate_names()
    if args.format == "json":
        doc = {"covariates": [{"name": n, "pip": float(p)} for n, p in zip(names, post.pips)],
               "h_mean": post.h_mean}
        _write(json.dumps(doc, indent=2) + "\n", args.output)
    else:
        lines = ["name\tpip"] + [f"{n}\t{float(p)!r}" for n, p in zip(names, post.pips)]
        _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def exit_code(err):
    """Exit status for an exception raised while handling a command."""
    if isinstance(err, (ConfigError, TooLarge, EmptyChain)):
        return EXIT_CONFIG
    if isinstance(err, (NumericalError, QuadratureNotConverged)):
        return EXIT_NUMERICAL
    if isinstance(err, (ParseError, MissingColumn, ShapeMismatch, DomainError, OSError)):
        return EXIT_DATA
    return EXIT_CONFIG


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = run if args.command == "run" else emit_oracle
    try:
        return handler(args)
    except (BVSError, OSError) as err:
        kind = type(err).__name__
        print(f"bvselect: {kind}: {err}", file=sys.stderr)
        return exit_code(err)
    except ValueError as err:
        print(f"bvselect: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
