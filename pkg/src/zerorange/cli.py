"""Command-line driver.

Options resolve as command-line flags > ``--config`` JSON file > built-in
defaults; the resolved configuration is echoed into every report.

Exit codes: 0 all checks passed, 1 a check failed, 2 usage error,
3 resource limit, 4 regime error, 5 numerical consistency failure,
6 domain error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .dynamics import TransitionKernel, simulate
from .errors import ConsistencyError, DomainError, RegimeError, RegimeWarning, ResourceError
from .experiments import (
    DEFAULT_SEED,
    EXPERIMENTS,
    TOLERANCES,
    bulk_marginal_run,
    identities_experiment,
    llt_experiment,
    max_fluctuation_run,
    second_largest_run,
    smoothness_experiment,
    stationarity_experiment,
    theorem1_run,
    threshold_scan,
)
from .exact import CanonicalDistribution, SplitTable, build_canonical_table
from .model import ModelParams, build_weight_table, critical_constants
from .reports import Report
from .rng import RngStream
from .sampling import (
    SampleBatch,
    sample_canonical_condensate,
    sample_canonical_exact,
    sample_canonical_rejection,
    sample_canonical_split,
    sample_iid,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3
EXIT_REGIME = 4
EXIT_CONSISTENCY = 5
EXIT_DOMAIN = 6

DEFAULTS = {
    "common": {
        "family": "power_law",
        "b": 4.0,
        "beta": 1.0,
        "lam": 0.75,
        "seed": DEFAULT_SEED,
        "report": None,
        "tolerance": [],
    },
    "verify-identities": {"bs": None, "perturb": 0.0, "max_L": 6, "max_N": 12},
    "sample": {"sampler": "exact", "L": 3, "N": None, "rho": None, "n": 10, "stream": 0, "out": None,
               "table_cache": None},
    "simulate": {"L": 3, "N": 5, "kernel": "ring", "t_end": 1000.0, "n_snapshots": 10, "events_out": None,
                 "snapshots_out": None, "stream": 0},
    "limit-test": {"experiment": None, "L": None, "rho": None, "n": None, "Ls": None},
    "llt-ratio": {"bs": None, "Ls": [50, 100, 200, 400], "rho_factor": 2.0},
    "threshold-scan": {"L": 400, "gammas": [-4, -2, 0, 2, 4, 6, 8, 10]},
}


@dataclass
class RunConfig:
    subcommand: str
    options: dict = field(default_factory=dict)

    def params(self) -> ModelParams:
        o = self.options
        if o["family"] == "power_law":
            return ModelParams.power_law(o["b"])
        return ModelParams.stretched(o["beta"], o["lam"])

    def tolerances(self) -> dict:
        tol = dict(TOLERANCES)
        for item in self.options.get("tolerance") or []:
            key, _, val = item.partition("=")
            if key not in tol:
                raise DomainError(f"unknown tolerance {key!r}; known: {sorted(tol)}")
            tol[key] = float(val)
        return tol

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# argument parsing


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file with option values")
    p.add_argument("--family", choices=["power_law", "stretched"], default=S)
    p.add_argument("--b", type=float, default=S, help="power-law exponent (b > 2)")
    p.add_argument("--beta", type=float, default=S, help="stretched-family amplitude")
    p.add_argument("--lam", type=float, default=S, help="stretched-family exponent in (1/2, 1)")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--report", default=S, help="write the JSON report here (default: stdout)")
    p.add_argument("--tolerance", action="append", default=S, metavar="KEY=VALUE",
                   help="override an entry of the tolerance table")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="zerorange", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("verify-identities", help="closed forms, series identities, stationarity")
    _common(p)
    p.add_argument("--bs", type=_floats, default=S, help="comma-separated exponents (default: --b)")
    p.add_argument("--perturb", type=float, default=S, help="inject a relative fault (negative control)")
    p.add_argument("--max-L", dest="max_L", type=int, default=S)
    p.add_argument("--max-N", dest="max_N", type=int, default=S)

    p = sub.add_parser("sample", help="draw configurations to CSV")
    _common(p)
    p.add_argument("--sampler", choices=["exact", "split", "condensate", "rejection", "iid"], default=S)
    p.add_argument("--L", type=int, default=S)
    p.add_argument("--N", type=int, default=S)
    p.add_argument("--rho", type=float, default=S, help="density; N = floor(rho L) when --N is absent")
    p.add_argument("--n", type=int, default=S, help="number of configurations")
    p.add_argument("--stream", type=int, default=S)
    p.add_argument("--out", default=S, help="CSV output path")
    p.add_argument("--table-cache", dest="table_cache", default=S, help="directory for cached tables")

    p = sub.add_parser("simulate", help="run the particle dynamics")
    _common(p)
    p.add_argument("--L", type=int, default=S)
    p.add_argument("--N", type=int, default=S)
    p.add_argument("--kernel", choices=["uniform", "ring"], default=S)
    p.add_argument("--t-end", dest="t_end", type=float, default=S)
    p.add_argument("--n-snapshots", dest="n_snapshots", type=int, default=S)
    p.add_argument("--events-out", dest="events_out", default=S)
    p.add_argument("--snapshots-out", dest="snapshots_out", default=S)
    p.add_argument("--stream", type=int, default=S)

    p = sub.add_parser("limit-test", help="limit-law experiments")
    _common(p)
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--L", type=int, default=S)
    p.add_argument("--Ls", type=_ints, default=S)
    p.add_argument("--rho", type=float, default=S)
    p.add_argument("--n", type=int, default=S)

    p = sub.add_parser("llt-ratio", help="local limit ratio trend along L")
    _common(p)
    p.add_argument("--bs", type=_floats, default=S)
    p.add_argument("--Ls", type=_ints, default=S)
    p.add_argument("--rho-factor", dest="rho_factor", type=float, default=S)

    p = sub.add_parser("threshold-scan", help="local limit ratio around the refined threshold")
    _common(p)
    p.add_argument("--L", type=int, default=S)
    p.add_argument("--gammas", type=_floats, default=S)
    return parser


def resolve(argv=None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    cmd = ns.pop("subcommand")
    opts = dict(DEFAULTS["common"])
    opts.update(DEFAULTS[cmd])
    if "config" in ns:
        path = ns.pop("config")
        with open(path, encoding="utf-8") as fh:
            opts.update(json.load(fh))
    opts.update(ns)
    return RunConfig(cmd, opts)


# ---------------------------------------------------------------------------
# subcommands


def _emit(report: Report, cfg: RunConfig) -> int:
    report.config = {**cfg.to_dict(), **report.config}
    for c in report.checks:
        print(c.line(), file=sys.stderr)
    text = report.to_json()
    if cfg.options.get("report"):
        report.write(cfg.options["report"])
    else:
        print(text)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_verify_identities(cfg: RunConfig) -> int:
    o = cfg.options
    tol = cfg.tolerances()
    bs = o["bs"] or [o["b"]]
    rep = identities_experiment(bs=bs, perturb=o["perturb"], tolerances=tol)
    for b in bs:
        rep.statistics[f"b={b}:sigma2"] = critical_constants(ModelParams.power_law(b)).sigma2
    sm = smoothness_experiment(ModelParams.stretched(o["beta"], o["lam"]))
    st = stationarity_experiment(bs=bs, max_L=o["max_L"], max_N=o["max_N"], perturb=o["perturb"], tolerances=tol)
    rep.checks += sm.checks + st.checks
    rep.statistics["fibers_checked"] = st.statistics["fibers_checked"]
    return _emit(rep, cfg)


def _resolve_N(o) -> int:
    if o.get("N") is not None:
        return int(o["N"])
    if o.get("rho") is not None:
        return int(math.floor(o["rho"] * o["L"]))
    raise DomainError("give --N or --rho")


def cmd_sample(cfg: RunConfig) -> int:
    o = cfg.options
    params = cfg.params()
    L, N, n = int(o["L"]), _resolve_N(o), int(o["n"])
    rng = RngStream(o["seed"], o["stream"])
    stats_: dict = {}
    t0 = time.perf_counter()
    if o["sampler"] == "exact":
        dist = CanonicalDistribution(build_canonical_table(params, L, N, cache_dir=o["table_cache"]))
        t0 = time.perf_counter()
        configs = sample_canonical_exact(dist, rng, n)
    elif o["sampler"] == "split":
        split = SplitTable.build(params, L, N)
        t0 = time.perf_counter()
        configs = sample_canonical_split(split, rng, n)
    elif o["sampler"] == "condensate":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RegimeWarning)
            d = sample_canonical_condensate(build_weight_table(params), L, N, rng, n)
        configs = d.configs
        stats_["rejection_rate"] = d.rejection_rate
        stats_["regime_warnings"] = [str(w.message) for w in caught]
    elif o["sampler"] == "rejection":
        d = sample_canonical_rejection(build_weight_table(params), L, N, rng, size=n)
        configs = d.configs
        stats_["acceptance_rate"] = d.acceptance_rate
    else:
        configs = sample_iid(build_weight_table(params), L, n, rng)
    dt = time.perf_counter() - t0
    batch = SampleBatch(params, L, N, configs, o["seed"], o["stream"], o["sampler"], stats_)
    if o["out"]:
        batch.to_csv(o["out"])
    stats_.update({"configs_per_s": n / dt if dt > 0 else math.inf, "sha256": batch.content_hash()})
    print(f"{n} configurations in {dt:.3f} s ({stats_['configs_per_s']:.1f} configs/s)", file=sys.stderr)
    rep = Report("sample", {}, statistics=stats_, params=params.to_dict(), seeds=[o["seed"]])
    if o["sampler"] != "iid":
        rep.add("every configuration sums to N", bool(np.all(configs.sum(axis=1) == N)))
    return _emit(rep, cfg)


def cmd_simulate(cfg: RunConfig) -> int:
    o = cfg.options
    params = cfg.params()
    L, N = int(o["L"]), int(o["N"])
    if N <= 0:
        raise DomainError("simulation needs at least one particle")
    eta0 = np.zeros(L, np.int64)
    eta0[0] = N
    kernel = TransitionKernel(L, o["kernel"])
    t_end = float(o["t_end"])
    snaps = np.linspace(0.0, t_end, int(o["n_snapshots"]) + 1)
    record = bool(o["events_out"])
    tr = simulate(params, eta0, kernel, t_end, RngStream(o["seed"], o["stream"]), record=record,
                  snapshot_times=snaps)
    if o["events_out"]:
        tr.events_to_csv(o["events_out"])
    if o["snapshots_out"]:
        tr.snapshots_to_csv(o["snapshots_out"])
    rep = Report("simulate", {}, params=params.to_dict(), seeds=[o["seed"]])
    rep.statistics.update({"events": tr.n_events, "null_events": tr.n_null, "t_end": tr.t_end,
                           "rate_drift": tr.rate_drift})
    rep.add("particle number conserved in every snapshot", bool(np.all(tr.snapshots.sum(axis=1) == N)))
    if L * N <= 10**6:
        try:
            exact = CanonicalDistribution(build_canonical_table(params, L, N)).site_marginal()
            tv = 0.5 * float(np.abs(tr.occupancy_distribution()[: N + 1] - exact).sum())
            rep.statistics["occupancy_tv_vs_exact"] = tv
        except ResourceError:
            pass
    return _emit(rep, cfg)


_LIMIT_DEFAULTS = {
    "max-clt": {"L": 1000, "rho": 2.0, "n": 10**4},
    "max-stable": {"L": 2000, "rho": None, "n": 10**4},
    "second-largest": {"L": 2000, "rho": 2.0, "n": 10**4},
    "bulk-marginal": {"L": 1000, "rho": 2.0, "n": 10**4},
    "theorem1": {"Ls": [100, 400, 1600], "rho": 2.0, "n": 10**5},
}


def cmd_limit_test(cfg: RunConfig) -> int:
    o = cfg.options
    exp = o["experiment"]
    tol = cfg.tolerances()
    params = cfg.params()
    if exp == "llt-ratio":
        return cmd_llt_ratio(cfg)
    if exp == "threshold-scan":
        return cmd_threshold_scan(cfg)
    d = dict(_LIMIT_DEFAULTS[exp])
    for k in ("L", "rho", "n", "Ls"):
        if o.get(k) is not None:
            d[k] = o[k]
    seed = o["seed"]
    if exp in ("max-clt", "max-stable"):
        if exp == "max-clt" and params.b < 3:
            raise RegimeError("max-clt needs b >= 3; use max-stable")
        if exp == "max-stable" and params.b >= 3:
            raise RegimeError("max-stable needs 2 < b < 3; use max-clt")
        rho = d["rho"] if d["rho"] is not None else 2 * critical_constants(params).rho_c
        b = params.b
        key = "ks_max_gauss" if b > 3 else ("ks_max_b3" if b == 3 else "ks_max_stable")
        rep = max_fluctuation_run(params, d["L"], rho, d["n"], seed, tolerance=tol[key])
    elif exp == "second-largest":
        rep = second_largest_run(params, d["L"], d["rho"], d["n"], seed, tolerances=tol)
    elif exp == "bulk-marginal":
        tkey = "ks_bulk_b3" if params.b == 3 else "ks_bulk"
        rep = bulk_marginal_run(params, d["L"], d["rho"], d["n"], seed, tolerance=tol[tkey], tolerances=tol)
    else:
        rep = theorem1_run(params, d["Ls"], d["rho"], d["n"], seed, tolerances=tol)
    return _emit(rep, cfg)


def cmd_llt_ratio(cfg: RunConfig) -> int:
    o = cfg.options
    if o["family"] == "power_law":
        bs = o.get("bs") or [o["b"]]
        plist = [ModelParams.power_law(b) for b in bs]
    else:
        plist = [cfg.params()]
    Ls = o.get("Ls") or DEFAULTS["llt-ratio"]["Ls"]
    rep = llt_experiment(plist, Ls, tolerances=cfg.tolerances(),
                         density_factor=o.get("rho_factor") or DEFAULTS["llt-ratio"]["rho_factor"])
    return _emit(rep, cfg)


def cmd_threshold_scan(cfg: RunConfig) -> int:
    o = cfg.options
    L = o.get("L") or DEFAULTS["threshold-scan"]["L"]
    gammas = o.get("gammas") or DEFAULTS["threshold-scan"]["gammas"]
    return _emit(threshold_scan(cfg.params(), int(L), gammas), cfg)


COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "sample": cmd_sample,
    "simulate": cmd_simulate,
    "limit-test": cmd_limit_test,
    "llt-ratio": cmd_llt_ratio,
    "threshold-scan": cmd_threshold_scan,
}


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except ResourceError as e:
        print(f"resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except RegimeError as e:
        print(f"regime error: {e}", file=sys.stderr)
        return EXIT_REGIME
    except ConsistencyError as e:
        print(f"consistency failure: {e}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except DomainError as e:
        print(f"domain error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
