"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 numerical or infeasibility error.
Runs that write files (``--out-dir``) also write ``manifest.json`` with the
resolved configuration; ``stephist --replay manifest.json`` repeats the run.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .combinatorics import (
    binom,
    brute_force_spacing_probs,
    circle_cover_exact,
    circle_cover_mc,
    prob_max_cell,
    prob_min_cell,
)
from .complexity import complexity_bi, complexity_eb
from .errors import InfeasibleError, InvalidArgumentError, StepHistError
from .experiments import (
    ExperimentConfig,
    loglog_multiplier,
    rate_slope,
    replicates_to_csv,
    rows_to_csv,
)
from .experiments import run_concentration
from .model_core import Dataset, StepFunction, as_fraction, simulate
from .partitions import BI, EB, BalanceConstraint, enumerate_partitions
from .posterior import PriorConfig, exact_posterior, mcmc_posterior
from .svgplot import line_plot

SUBCOMMANDS = ("simulate", "lemma", "enumerate", "complexity", "fit", "concentrate", "cover")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


@dataclass
class _Run:
    """Collects output files for one invocation."""

    args: argparse.Namespace
    argv: list[str]
    files: dict[str, str] = field(default_factory=dict)
    stdout: str = ""

    def emit(self, name: str, text: str, primary: bool = True) -> None:
        if self.args.out_dir is None and primary:
            self.stdout += text
        self.files[name] = text

    def finish(self) -> None:
        if self.stdout:
            sys.stdout.write(self.stdout)
        out_dir = self.args.out_dir
        if out_dir is None:
            return
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (out / name).write_text(text)
        manifest = {
            "tool": "stephist",
            "version": __version__,
            "subcommand": self.args.command,
            "argv": self.argv,
            "config": {k: _jsonable(v) for k, v in sorted(vars(self.args).items())},
            "outputs": sorted(self.files),
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return str(v)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _balance(args) -> BalanceConstraint:
    return BalanceConstraint(as_fraction(args.cmin_sq), as_fraction(args.cmax_sq))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--out-dir", default=None, help="write outputs and manifest here")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = _Parser(prog="stephist", description="Bayesian step-function regression tools")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--replay", metavar="MANIFEST", help="re-run the invocation in a manifest")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.add_argument("--version", action="version", version=f"stephist {__version__}")
        return p

    p = add("simulate", "simulate data from a step function")
    p.add_argument("--f0", required=True, help="step function JSON")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--name", default="data", help="base name of the CSV and sidecar")

    p = add("lemma", "exact spacing probabilities for grid splits")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--k-max", type=_positive_int, required=True)
    p.add_argument("--grid-of-C", dest="grid_of_c", default="all",
                   help="comma-separated grid multiples a (C = a/n), or 'all'")
    p.add_argument("--oracle-limit", type=int, default=200_000,
                   help="cross-check by enumeration when C(n-1,K-1) is at most this")

    p = add("enumerate", "list K-partitions of the n-grid")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--cmin-sq", default=None)
    p.add_argument("--cmax-sq", default=None)

    p = add("complexity", "complexity of a step function for both partition classes")
    p.add_argument("--f0", required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--cmin-sq", default="0.5")
    p.add_argument("--cmax-sq", default="2")
    p.add_argument("--cap", type=_positive_int, default=None)

    p = add("fit", "posterior for a dataset")
    p.add_argument("--data", required=True, help="CSV with header x,y")
    p.add_argument("--class", dest="pclass", choices=("eb", "bi"), default="eb")
    p.add_argument("--engine", choices=("exact", "mcmc"), default="exact")
    p.add_argument("--ck", type=float, default=1.0)
    p.add_argument("--cmin-sq", default="0.5")
    p.add_argument("--cmax-sq", default="2")
    p.add_argument("--iters", type=_positive_int, default=50_000)
    p.add_argument("--k-limit", type=_positive_int, default=None)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--noise-sd", type=float, default=None, help="defaults to the sidecar value or 1")
    p.add_argument("--f0", default=None, help="true step function JSON for the CSV f0 column")
    p.add_argument("--out", default="summary.json")
    p.add_argument("--svg", action="store_true", help="also write a line plot")

    p = add("concentrate", "posterior concentration experiment")
    p.add_argument("--config", required=True, help="key=value lines")
    p.add_argument("--workers", type=_positive_int, default=None)

    p = add("cover", "discrete circle covering probability")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--arc-length", required=True)
    p.add_argument("--trials", type=_positive_int, default=100_000)
    return parser


def _cmd_simulate(run: _Run) -> None:
    a = run.args
    f0 = StepFunction.load(a.f0)
    data = simulate(f0, a.n, a.noise_sd, seed=a.seed)
    tmp = io.StringIO()
    w = csv.writer(tmp, lineterminator="\n")
    w.writerow(["x", "y"])
    for x, y in zip(data.grid.points, data.responses):
        w.writerow([repr(float(x)), repr(float(y))])
    meta = {"n": data.n, "seed": data.seed, "noise_sd": data.noise_sd, "f0": f0.to_json()}
    if a.out_dir is None:
        a.out_dir = "."
    run.emit(f"{a.name}.csv", tmp.getvalue())
    run.emit(f"{a.name}.json", _dumps(meta))


def _grid_of_c(spec: str, n: int, K: int) -> list[int]:
    top = n // K
    if spec == "all":
        return list(range(1, top + 1))
    vals = sorted({int(v) for v in spec.split(",") if v.strip()})
    return [v for v in vals if 1 <= v <= top]


def _cmd_lemma(run: _Run) -> int:
    a = run.args
    n = a.n
    rows = []
    mismatch = False
    for K in range(1, min(a.k_max, n) + 1):
        for m in _grid_of_c(a.grid_of_c, n, K):
            C = Fraction(m, n)
            pmin, pmax = prob_min_cell(n, K, C), prob_max_cell(n, K, C)
            checked = binom(n - 1, K - 1) <= a.oracle_limit
            if checked:
                bmin, bmax = brute_force_spacing_probs(n, K, C)
                mismatch |= bmin != pmin or bmax != pmax
            rows.append([n, K, m, repr(m / n), pmin.numerator, pmin.denominator,
                         pmax.numerator, pmax.denominator, str(checked).lower()])
    header = ["n", "K", "a", "C", "min_prob_num", "min_prob_den", "max_prob_num", "max_prob_den", "oracle_checked"]
    if a.format == "json":
        run.emit("lemma.json", _dumps([dict(zip(header, r)) for r in rows]))
    else:
        run.emit("lemma.csv", _csv(rows, header))
    if mismatch:
        print("stephist lemma: closed form disagrees with enumeration", file=sys.stderr)
        return 2
    return 0


def _cmd_enumerate(run: _Run) -> None:
    a = run.args
    bc = None
    if a.cmin_sq is not None or a.cmax_sq is not None:
        bc = BalanceConstraint(as_fraction(a.cmin_sq or "1"), as_fraction(a.cmax_sq or "1"))
    lines = []
    for p in enumerate_partitions(a.n, a.k, bc):
        if a.format == "json":
            lines.append(json.dumps(p.to_json(), sort_keys=True))
        else:
            lines.append(",".join(map(str, p.splits)))
    run.emit("partitions.jsonl" if a.format == "json" else "partitions.txt",
             "".join(line + "\n" for line in lines))


def _cmd_complexity(run: _Run) -> int:
    a = run.args
    f0 = StepFunction.load(a.f0)
    out = {"eb": complexity_eb(f0, a.n, a.cap).to_json()}
    code = 0
    try:
        out["bi"] = complexity_bi(f0, a.n, _balance(a), a.cap).to_json()
    except InfeasibleError as exc:
        out["bi"] = {"k": None, "error": str(exc), "cap": a.cap or a.n}
        code = 2
    run.emit("complexity.json", _dumps(out))
    return code


def _cmd_fit(run: _Run) -> None:
    a = run.args
    data = Dataset.read_csv(a.data)
    f0 = StepFunction.load(a.f0) if a.f0 else data.f0
    noise_sd = a.noise_sd if a.noise_sd is not None else data.noise_sd
    if not noise_sd > 0:
        noise_sd = 1.0
    cfg = PriorConfig(
        c_k=a.ck,
        bc=_balance(a),
        partition_class=EB if a.pclass == "eb" else BI,
        noise_sd=noise_sd,
    )
    if a.engine == "exact":
        summary = exact_posterior(data, cfg, k_limit=a.k_limit, n_samples=a.samples, seed=a.seed)
    else:
        summary = mcmc_posterior(data, cfg, a.iters, seed=a.seed, n_samples=a.samples)
    if a.out_dir is None:
        out = Path(a.out)
        a.out_dir = str(out.parent)
        a.out = out.name
    run.emit(a.out, _dumps(summary.to_json()))

    x = data.grid.points
    truth = f0.on_grid(data.grid) if f0 is not None else None
    if summary.samples:
        lo, hi = summary.band(data.grid)
    else:
        lo = hi = np.full(data.n, math.nan)
    rows = []
    for i in range(data.n):
        rows.append([
            repr(float(x[i])),
            repr(float(truth[i])) if truth is not None else "",
            repr(float(summary.mean_on_grid[i])),
            repr(float(lo[i])),
            repr(float(hi[i])),
        ])
    stem = Path(a.out).stem
    run.emit(f"{stem}_mean.csv", _csv(rows, ["x", "f0", "posterior_mean", "lo95", "hi95"]))
    if a.svg:
        series = [("data", x, data.responses), ("posterior mean", x, summary.mean_on_grid),
                  ("lo95", x, lo), ("hi95", x, hi)]
        if truth is not None:
            series.append(("f0", x, truth))
        run.emit(f"{stem}_mean.svg", line_plot(series, title="posterior mean", xlabel="x", ylabel="y"))


CONFIG_KEYS = {
    "f0", "n_list", "reps", "ck", "class", "engine", "seed", "beta", "m_n",
    "samples", "iters", "workers", "cmin_sq", "cmax_sq", "noise_sd", "cap",
}


def parse_config(path) -> dict:
    conf = {}
    base = Path(path).parent
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise InvalidArgumentError(f"{path}:{lineno}: unknown key {key!r}")
        conf[key] = value
    if "f0" not in conf:
        raise InvalidArgumentError(f"{path}: missing f0")
    f0_path = Path(conf["f0"])
    conf["f0"] = str(f0_path if f0_path.is_absolute() else base / f0_path)
    return conf


def experiment_from_config(conf: dict, seed: int | None = None, workers: int | None = None) -> ExperimentConfig:
    m_n = conf.get("m_n", "loglog")
    prior = PriorConfig(
        c_k=float(conf.get("ck", 1.0)),
        bc=BalanceConstraint(as_fraction(conf.get("cmin_sq", "0.5")), as_fraction(conf.get("cmax_sq", "2"))),
        partition_class=EB if conf.get("class", "eb").lower() == "eb" else BI,
    )
    kwargs = dict(
        f0=StepFunction.load(conf["f0"]),
        n_list=tuple(int(v) for v in conf.get("n_list", "128,256,512,1024").split(",")),
        reps=int(conf.get("reps", 50)),
        m_n=loglog_multiplier if m_n == "loglog" else float(m_n),
        rate_exponent_beta=float(conf.get("beta", 0.75)),
        prior=prior,
        engine=conf.get("engine", "exact"),
        seed_base=int(conf["seed"]) if "seed" in conf else int(seed or 0),
        n_samples=int(conf.get("samples", 200)),
        mcmc_iters=int(conf.get("iters", 20_000)),
        noise_sd=float(conf.get("noise_sd", 1.0)),
        cap=int(conf["cap"]) if "cap" in conf else None,
        workers=workers or int(conf.get("workers", 1)),
    )
    return ExperimentConfig(**kwargs)


def _cmd_concentrate(run: _Run) -> None:
    a = run.args
    cfg = experiment_from_config(parse_config(a.config), seed=a.seed, workers=a.workers)
    rows = run_concentration(cfg)
    if a.out_dir is None:
        a.out_dir = "."
    if a.format == "json":
        payload = {
            "rows": [
                {k: getattr(r, k) for k in ("n", "k_f0", "epsilon_n", "median_error", "mass_outside",
                                            "k_mode_hit_rate", "epsilon_n_bi", "radius")}
                for r in rows
            ],
            "rate_slope": rate_slope(rows) if len(rows) >= 3 else None,
        }
        run.emit("concentration.json", _dumps(payload))
    else:
        run.emit("concentration.csv", rows_to_csv(rows))
    run.emit("replicates.csv", replicates_to_csv(rows), primary=False)
    ns = [r.n for r in rows]
    series = [("median error", ns, [r.median_error for r in rows]),
              ("eps_n", ns, [r.epsilon_n for r in rows])]
    run.emit("concentration.svg", line_plot(series, title="posterior concentration", xlabel="n",
                                            ylabel="empirical norm", logx=True, logy=True), primary=False)


def _cmd_cover(run: _Run) -> None:
    a = run.args
    length = as_fraction(a.arc_length)
    est = circle_cover_mc(a.n, a.k, length, a.trials, seed=a.seed)
    exact = ""
    if binom(a.n, a.k) <= 10**6:
        exact = repr(float(circle_cover_exact(a.n, a.k, length)))
    row = {
        "n": a.n, "K": a.k, "arc_length": repr(float(length)), "trials": est.trials,
        "hits": est.hits, "estimate": repr(est.estimate), "std_error": repr(est.std_error),
        "exact": exact, "max_cell_prob": repr(float(prob_max_cell(a.n, a.k, min(length, Fraction(1))))),
    }
    if a.format == "json":
        run.emit("cover.json", _dumps(row))
    else:
        run.emit("cover.csv", _csv([list(row.values())], list(row)))


HANDLERS = {
    "simulate": _cmd_simulate,
    "lemma": _cmd_lemma,
    "enumerate": _cmd_enumerate,
    "complexity": _cmd_complexity,
    "fit": _cmd_fit,
    "concentrate": _cmd_concentrate,
    "cover": _cmd_cover,
}


def _replay(argv: list[str]) -> int:
    rp = _Parser(prog="stephist --replay")
    rp.add_argument("--replay", required=True, metavar="MANIFEST")
    rp.add_argument("--out-dir", default=None, help="override the recorded output directory")
    try:
        ra = rp.parse_args(argv)
        manifest = json.loads(Path(ra.replay).read_text())
        recorded = list(manifest["argv"])
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"stephist: cannot read manifest: {exc}", file=sys.stderr)
        return 1
    if ra.out_dir is not None:
        recorded = _without_out_dir(recorded) + ["--out-dir", ra.out_dir]
    return dispatch(recorded)


def _without_out_dir(argv: list[str]) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok == "--out-dir":
            skip = True
        elif not tok.startswith("--out-dir="):
            out.append(tok)
    return out


def dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 1
    if argv[0] == "--replay" or argv[0].startswith("--replay="):
        return _replay(argv)
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.replay:
        return _replay(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    run = _Run(args, argv)
    try:
        code = HANDLERS[args.command](run) or 0
    except InfeasibleError as exc:
        print(f"stephist {args.command}: {exc}", file=sys.stderr)
        return 2
    except (InvalidArgumentError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"stephist {args.command}: {exc}", file=sys.stderr)
        return 1
    except StepHistError as exc:
        print(f"stephist {args.command}: {exc}", file=sys.stderr)
        return 2
    run.finish()
    return code


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
