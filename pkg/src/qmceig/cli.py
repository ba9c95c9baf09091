"""Command-line entry point: ``qmceig <subcommand> [options]``.

Settings come from built-in defaults, then ``--preset``, then a key = value
config file (``--config``), then explicit flags; later sources win.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import __version__
from ._accel import backend_name, set_threads
from .design import (convergence_study, default_window, eig_for_design, enumerate_designs,
                     select_optimal_design, selection_stability)
from .fem import UNIVERSE, Design
from .lattice import PRNG_NAME, cbc_construct, save_generating_vector
from .problems import (INNER_SOURCES, OUTER_SOURCES, PROBLEMS, TOY_DESIGN, fem_order_study,
                       manufactured_exact, manufactured_model, pde_problem, toy_problem)

CSV_SCHEMA = "qmceig-csv/1"
CSV_COLUMNS = ["design_id", "sensors", "method", "level", "n_inner", "n_outer", "R", "N_gross", "N_net",
               "i_k_estimate", "eig", "rms_error", "abs_error", "runtime_ms", "fitted_slope"]

PRESETS = {
    "desk": {"s": 10, "q": 4, "levels": "0..5", "R": 8},
    "paper": {"s": 100, "q": 5, "levels": "0..9", "R": 16},
}


# defaults that differ from the PDE problems; presets, files and flags override them
PROBLEM_DEFAULTS = {
    "toy_analytic": {"s": 2, "gamma": 1.0, "K": 2.0},
}


class ConfigError(ValueError):
    """Invalid configuration; the CLI exits with status 2."""


@dataclass
class ExperimentConfig:
    problem: str = "paper_i"
    s: int = 10
    q: int = 4
    gamma: float = 0.01
    K: float = 0.5
    eps: float | None = None
    center: str | None = None
    method: str = "ftp"
    levels: str = "0..5"
    sigma: float = 1.0
    offset: int = 1
    R: int = 8
    seed: int = 0
    outer_family: str = "lattice"
    index_shift: int = 2
    inner_vector: str = "bundled"
    outer_vector: str = "product"
    design: str | None = None
    mode: str | None = None
    reference_level: int | None = None
    window: int | None = None
    theta: str | None = None
    timing: bool = False
    output: str | None = None

    # -- parsing helpers ---------------------------------------------------
    def level_list(self) -> list[int]:
        return parse_levels(self.levels)

    def center_tuple(self, k):
        if self.center is None:
            return None
        vals = [float(v) for v in str(self.center).split(",")]
        if len(vals) == 1:
            vals = vals * k
        if len(vals) != k:
            raise ConfigError(f"center needs 1 or {k} values")
        return tuple(vals)

    def validate(self) -> "ExperimentConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}")
        if self.method not in ("ftp", "stp"):
            raise ConfigError("method must be ftp or stp")
        if self.outer_family not in ("lattice", "smolyak"):
            raise ConfigError("outer_family must be lattice or smolyak")
        if self.s < 1 or self.q < 1 or self.R < 1 or self.offset < 0:
            raise ConfigError("s, q and R must be >= 1 and offset >= 0")
        if not self.gamma > 0 or not self.K > 0 or not self.sigma > 0:
            raise ConfigError("gamma, K and sigma must be positive")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        try:
            lv = self.level_list()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not lv or min(lv) < 0:
            raise ConfigError("levels must be nonnegative")
        if self.sigma != 1.0 and self.method == "stp":
            for L in lv:
                for l1 in range(int(math.floor(L / self.sigma)) + 1):
                    if not float(self.sigma * L - self.sigma ** 2 * l1).is_integer():
                        raise ConfigError("sigma must make every inner level sigma*L - sigma^2*l1 an integer")
        if self.outer_family == "smolyak" and self.R != 1:
            raise ConfigError("the Smolyak outer rule is deterministic: use R = 1")
        if self.mode not in (None, "rms", "abs"):
            raise ConfigError("mode must be rms or abs")
        if self.mode == "rms" and self.R < 2:
            raise ConfigError("rms errors need R >= 2")
        for name, allowed in (("inner_vector", INNER_SOURCES), ("outer_vector", OUTER_SOURCES)):
            val = getattr(self, name)
            if val not in allowed and not os.path.isfile(val):
                raise ConfigError(f"{name} must be one of {allowed} or an existing file")
        if self.problem in ("paper_i", "paper_ii") and self.design is not None:
            parse_design(self.design)
        self.center_tuple(3)
        return self

    def as_dict(self):
        d = dataclasses.asdict(self)
        d.pop("output")
        return d

    def hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_levels(text) -> list[int]:
    """'0..5' (inclusive), '2,4,6' or a single integer."""
    text = str(text).strip()
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError("empty level range")
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def parse_design(text) -> Design:
    """'x,y;x,y;x,y' -> Design."""
    try:
        pts = [tuple(float(v) for v in part.split(",")) for part in str(text).split(";") if part.strip()]
        return Design(tuple(pts))
    except ValueError as exc:
        raise ConfigError(f"bad design {text!r}: {exc}") from None


# -- config assembly -----------------------------------------------------
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_FIELDS_LOWER = {name.lower(): name for name in _FIELDS}


def _coerce(name, value):
    if value is None or isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("none", ""):
        return None
    typ = str(_FIELDS[name].type)
    try:
        if typ.startswith("int"):
            return int(value)
        if typ.startswith("float"):
            return float(value)
        if typ == "bool":
            return str(value).strip().lower() in ("1", "true", "yes", "on")
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r}") from None
    return str(value)


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    if not text.lstrip().startswith("["):
        text = "[qmceig]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config file: {exc}") from None
    out = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            name = _FIELDS_LOWER.get(key.replace("-", "_").lower())
            if name is None:
                raise ConfigError(f"unknown config key {key!r}")
            out[name] = val
    return out


def build_config(args) -> ExperimentConfig:
    values = {}
    if getattr(args, "preset", None):
        values.update(PRESETS[args.preset])
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None and v is not False:
            values[name] = v
    values = {**PROBLEM_DEFAULTS.get(values.get("problem", "paper_i"), {}), **values}
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return cfg.validate()


# -- problem wiring ------------------------------------------------------
def make_problem(cfg: ExperimentConfig):
    inner_file = cfg.inner_vector if cfg.inner_vector not in INNER_SOURCES else None
    outer_file = cfg.outer_vector if cfg.outer_vector not in OUTER_SOURCES else None
    if cfg.problem == "toy_analytic":
        return toy_problem(s=cfg.s, gamma=cfg.gamma, K=cfg.K, inner_vector_file=inner_file,
                           outer_vector_file=outer_file)
    if cfg.problem == "manufactured":
        raise ConfigError("the manufactured problem supports solve-pde and oracle only")
    return pde_problem("affine" if cfg.problem == "paper_i" else "periodic", s=cfg.s, q=cfg.q, gamma=cfg.gamma,
                       K=cfg.K, center=cfg.center_tuple(3), eps=cfg.eps, inner_vector_file=inner_file,
                       outer_vector_file=outer_file,
                       inner_source=cfg.inner_vector if inner_file is None else "bundled",
                       outer_source=cfg.outer_vector if outer_file is None else "product")


def config_factory(cfg, problem, top_level):
    def make(L, method=None):
        return problem.config(method or cfg.method, L, R=cfg.R, seed=cfg.seed, offset=cfg.offset,
                              outer_family=cfg.outer_family, sigma=cfg.sigma, index_shift=cfg.index_shift,
                              top_level=top_level)
    return make


def default_design(cfg, problem):
    if cfg.problem == "toy_analytic":
        return TOY_DESIGN
    return parse_design(cfg.design) if cfg.design else None


# -- output --------------------------------------------------------------
def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_table(cfg, rows, columns, out=None):
    """CSV with a comment header carrying schema, version, seed and the config."""
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA}\n")
    buf.write(f"# qmceig {__version__} config_hash={cfg.hash()} seed={cfg.seed} prng={PRNG_NAME}\n")
    buf.write("# config=" + json.dumps(cfg.as_dict(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    text = buf.getvalue()
    if cfg.output:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(text)
    else:
        (out or sys.stdout).write(text)
    return text


def _row(design_id, est, cfg, **extra):
    row = {"design_id": design_id, "sensors": est.design.label(), "method": est.method, "level": est.level,
           "n_inner": est.n_inner, "n_outer": est.n_outer, "R": est.R, "N_gross": est.node_budget[0],
           "N_net": est.node_budget[1], "i_k_estimate": est.i_k_estimate, "eig": est.value,
           "runtime_ms": round(est.runtime_ms, 3) if cfg.timing else None}
    row.update(extra)
    return row


# -- subcommands ---------------------------------------------------------
def cmd_cbc(args):
    from .weights import (RegularityParams, order_dependent_weights_outer, pod_weights_inner,
                          pod_weights_stp_inner, product_weights, spod_weights_periodic)
    if args.n < 2 or args.n & (args.n - 1):
        raise ConfigError("n must be a power of two >= 2")
    b = tuple(args.b_scale / j ** args.decay for j in range(1, args.dim + 1))
    params = RegularityParams(C=args.C, beta=args.beta, b=b, p=args.p, mu_min=args.mu_min, K=args.K, k=args.k)
    weights = {"pod": pod_weights_inner, "pod-stp": pod_weights_stp_inner,
               "order": order_dependent_weights_outer, "spod": spod_weights_periodic,
               "product": lambda prm: product_weights(b)}[args.weights](params)
    z = cbc_construct(args.n, args.dim, weights)
    if args.output:
        save_generating_vector(args.output, z)
    else:
        sys.stdout.write(f"# cbc n={args.n} s={args.dim} weights={args.weights} qmceig {__version__}\n")
        for c in z.components:
            sys.stdout.write(f"{c}\n")
    return 0


def cmd_solve_pde(args):
    cfg = build_config(args)
    if cfg.problem == "manufactured":
        model = manufactured_model(cfg.q)
        u = model.assemble_and_solve(np.zeros(1))
        sensors = parse_design(cfg.design).sensors if cfg.design else UNIVERSE
        rows = [{"x1": x[0], "x2": x[1], "value": float(u[model.mesh.node_of(x)])} for x in sensors]
        rows.append({"x1": None, "x2": None, "value": model.l2_error(u, manufactured_exact)})
        write_table(cfg, rows, ["x1", "x2", "value"])
        return 0
    if cfg.problem == "toy_analytic":
        raise ConfigError("solve-pde needs a PDE problem")
    problem = make_problem(cfg)
    theta = np.zeros(cfg.s) if cfg.theta is None else np.array([float(v) for v in cfg.theta.split(",")])
    if theta.shape != (cfg.s,):
        raise ConfigError(f"theta needs {cfg.s} values")
    try:
        problem.model.field.check_theta(theta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    design = parse_design(cfg.design) if cfg.design else Design(UNIVERSE)
    vals = problem.model.forward(theta, design)
    rows = [{"x1": x[0], "x2": x[1], "value": float(v)} for x, v in zip(design.sensors, vals)]
    write_table(cfg, rows, ["x1", "x2", "value"])
    return 0


def cmd_eig(args):
    cfg = build_config(args)
    problem = make_problem(cfg)
    design = default_design(cfg, problem)
    if design is None:
        raise ConfigError("eig needs --design 'x,y;x,y;x,y'")
    levels = cfg.level_list()
    make = config_factory(cfg, problem, max(levels))
    rows = [_row(0, eig_for_design(design, problem, make(L)), cfg) for L in levels]
    write_table(cfg, rows, CSV_COLUMNS)
    return 0


def cmd_design_search(args):
    cfg = build_config(args)
    if cfg.problem not in ("paper_i", "paper_ii"):
        raise ConfigError("design-search needs paper_i or paper_ii")
    problem = make_problem(cfg)
    levels = cfg.level_list()
    if args.all_levels:
        search_levels = levels
    else:
        search_levels = levels[-2:] if len(levels) >= 2 else levels
    make = config_factory(cfg, problem, max(levels))
    designs = enumerate_designs(UNIVERSE, 3)
    ids = {d: i for i, d in enumerate(designs)}
    tables, rows = {}, []
    for L in search_levels:
        _, table = select_optimal_design(UNIVERSE, 3, problem, make(L), designs=designs)
        tables[L] = table
        if args.all_levels or L == max(search_levels):
            ranked = sorted(table, key=lambda e: (-e.value, ids[e.design]))
            rows.extend(_row(ids[e.design], e, cfg) for e in ranked)
    write_table(cfg, rows, CSV_COLUMNS)
    if len(tables) >= 2:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            stable, top, _, gap = selection_stability(tables, UNIVERSE)
        for wmsg in caught:
            print(f"warning: {wmsg.message}", file=sys.stderr)
        print(f"selected design: {top.label()} (stable across top two levels: {stable}, EIG gap {gap:.3e})",
              file=sys.stderr)
    return 0


def cmd_convergence(args):
    cfg = build_config(args)
    problem = make_problem(cfg)
    levels = cfg.level_list()
    if len(levels) < 3:
        raise ConfigError("a convergence sweep needs at least 3 levels")
    mode = cfg.mode or ("abs" if cfg.outer_family == "smolyak" or cfg.R == 1 else "rms")
    window = cfg.window or default_window(cfg.method)
    if len(levels) < window:
        raise ConfigError(f"need at least {window} levels for the fit window")
    ref_level = cfg.reference_level if cfg.reference_level is not None else max(levels) + 2
    top = max(max(levels), ref_level if mode == "abs" else 0)
    make = config_factory(cfg, problem, top)
    design = default_design(cfg, problem)
    if design is None:
        # the optimum at the top sweep level, as in the design search
        design, _ = select_optimal_design(UNIVERSE, 3, problem, make(max(levels)))
        print(f"using optimal design {design.label()}", file=sys.stderr)
    rec = convergence_study(problem, design, make, levels, mode=mode,
                            reference_level=ref_level if mode == "abs" else None, window=window)
    rows = []
    for i, L in enumerate(levels):
        est = rec.estimates[i]
        rows.append({"design_id": 0, "sensors": design.label(), "method": cfg.method, "level": L,
                     "n_inner": rec.n_inner[i], "n_outer": rec.n_outer[i], "R": cfg.R,
                     "N_gross": rec.budgets_gross[i], "N_net": rec.budgets[i], "i_k_estimate": est,
                     "eig": problem.log_c - 1.0 - est,
                     "rms_error": rec.errors[i] if mode == "rms" else None,
                     "abs_error": rec.errors[i] if mode == "abs" else None,
                     "runtime_ms": round(rec.runtimes_ms[i], 3) if cfg.timing else None,
                     "fitted_slope": rec.fitted_slope})
    write_table(cfg, rows, CSV_COLUMNS)
    flag = "" if rec.slope_defined else " (undefined)"
    print(f"fitted slope over last {window} levels: {rec.fitted_slope:.4f}{flag}", file=sys.stderr)
    return 0


def run_oracle_checks(quick=False):
    """(name, passed, detail) for the built-in oracle checks."""
    from .combinatorics import celine_identity_check, gosper_identity_check
    from .cubature import estimate
    from .oracle import DenseQuadratureSpec, dense_double_integral, sparse_node_count, verify_lah_sharpness

    checks = []
    bad = [v for v in range(1, 31) if not celine_identity_check(v)]
    checks.append(("celine identity v<=30", not bad, f"failures={bad}"))
    bad = [(v, l) for v in range(1, 26) for l in range(2, v + 2) if not gosper_identity_check(v, l)]
    checks.append(("gosper identity v<=25", not bad, f"failures={bad}"))
    rep = verify_lah_sharpness(4 if quick else 6, 3)
    checks.append(("lah sharpness", rep.ok, f"checked={rep.checked} mismatches={len(rep.mismatches)}"))
    checks.append(("sparse count k=1", all(sparse_node_count(1, m) == 2 ** m + 1 for m in range(1, 8)), ""))
    _, errs, slope = fem_order_study()
    checks.append(("fem order", 1.8 <= slope <= 2.2, f"slope={slope:.4f}"))
    toy = toy_problem(s=1)
    a = np.array([1.0])
    spec = DenseQuadratureSpec(1, 1, 32, y_box=((-toy.box.K, toy.box.K),))
    ref = dense_double_integral(spec, lambda th, y: np.exp(-0.5 * (y[:, 0] - th @ a) ** 2),
                                scale=math.exp(toy.log_c))
    R = 64 if quick else 512
    for method in ("ftp", "stp"):
        est = estimate(toy.config(method, 8, R=R, seed=1), toy.integrand(TOY_DESIGN)).mean
        checks.append((f"toy {method} vs dense oracle", abs(est - ref) <= 1e-4, f"err={est - ref:.2e}"))
    return checks


def cmd_oracle(args):
    checks = run_oracle_checks(quick=args.quick)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}".rstrip())
    return 0 if all(ok for _, ok, _ in checks) else 1


def cmd_weights(args):
    from .weights import RegularityParams, order_dependent_weights_outer, pod_weights_inner, spod_weights_periodic
    b = tuple(args.b_scale / j ** args.decay for j in range(1, args.dim + 1))
    params = RegularityParams(C=args.C, b=b, p=args.p, mu_min=args.mu_min, K=args.K, k=args.k)
    ws = {"pod": pod_weights_inner, "order": order_dependent_weights_outer,
          "spod": spod_weights_periodic}[args.weights](params)
    print("order,log_gamma_first_members")
    for m in range(1, args.dim + 1):
        print(f"{m},{ws.log_gamma(tuple(range(1, m + 1)))!r}")
    return 0


# -- argument parsing ----------------------------------------------------
def _experiment_flags(p):
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--s", type=int)
    p.add_argument("--q", type=int, help="mesh exponent, h = 2^-q")
    p.add_argument("--gamma", type=float, help="noise variance, Gamma = gamma I")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--K", type=float, help="data box half-width")
    g.add_argument("--eps", type=float, help="choose K from this tail tolerance")
    p.add_argument("--center", help="data box center, one value or k comma-separated values")
    p.add_argument("--method", choices=("ftp", "stp"))
    p.add_argument("--levels", help="e.g. 0..5 or 2,4,6")
    p.add_argument("--sigma", type=float)
    p.add_argument("--offset", type=int)
    p.add_argument("--R", type=int, help="number of random shifts")
    p.add_argument("--seed", type=int)
    p.add_argument("--outer-family", dest="outer_family", choices=("lattice", "smolyak"))
    p.add_argument("--index-shift", dest="index_shift", type=int)
    p.add_argument("--inner-vector", dest="inner_vector", help=f"{'|'.join(INNER_SOURCES)} or a file")
    p.add_argument("--outer-vector", dest="outer_vector", help=f"{'|'.join(OUTER_SOURCES)} or a file")
    p.add_argument("--design", help="sensors as 'x,y;x,y;x,y'")
    p.add_argument("--mode", choices=("rms", "abs"))
    p.add_argument("--reference-level", dest="reference_level", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--theta", help="comma-separated parameter vector for solve-pde")
    p.add_argument("--timing", action="store_true", help="fill runtime_ms (makes output nondeterministic)")
    p.add_argument("--output", "-o")


def _weight_flags(p, choices):
    p.add_argument("--weights", choices=choices, default=choices[0])
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--b-scale", dest="b_scale", type=float, default=0.1)
    p.add_argument("--decay", type=float, default=2.0)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--p", type=float, default=0.6)
    p.add_argument("--mu-min", dest="mu_min", type=float, default=0.01)
    p.add_argument("--K", type=float, default=0.5)
    p.add_argument("--k", type=int, default=3)


def build_parser():
    parser = argparse.ArgumentParser(prog="qmceig", description="QMC estimation of expected information gain")
    parser.add_argument("--version", action="version", version=f"qmceig {__version__}")
    parser.add_argument("--threads", type=int, help="worker cap (default: $QMCEIG_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cbc", help="construct a generating vector")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--output", "-o")
    _weight_flags(p, ("pod", "pod-stp", "order", "spod", "product"))
    p.set_defaults(func=cmd_cbc)

    for name, func, hlp in (("solve-pde", cmd_solve_pde, "one forward solve"),
                            ("eig", cmd_eig, "EIG of one design"),
                            ("design-search", cmd_design_search, "EIG of all 84 designs"),
                            ("convergence", cmd_convergence, "error decay over a level sweep")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        _experiment_flags(p)
        if name == "design-search":
            p.add_argument("--all-levels", dest="all_levels", action="store_true",
                           help="search and print every level; by default only the top level is\n"
                                "printed and the one below it is used for the stability check")
        p.set_defaults(func=func)

    p = sub.add_parser("oracle", help="run the built-in oracle checks")
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("weights", help="dump log weights by order")
    _weight_flags(p, ("pod", "order", "spod"))
    p.set_defaults(func=cmd_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    threads = args.threads or os.getenv("QMCEIG_THREADS")
    try:
        if threads:
            set_threads(int(threads))
        t0 = time.perf_counter()
        status = args.func(args)
        if getattr(args, "timing", False):
            print(f"elapsed {time.perf_counter() - t0:.2f} s ({backend_name()})", file=sys.stderr)
        return status
    except ConfigError as exc:
        print(f"qmceig: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"qmceig: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
