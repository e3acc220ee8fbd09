"""Command-line frontend: one batch subcommand per engine.

Conventions shared by every subcommand:

* options come from flags, or from a flat ``key=value`` config file given
  with ``--config`` (flag wins; keys use the flag spelling with ``_`` for
  ``-``; unknown keys are rejected);
* results go to stdout, or to ``--output PATH``;
* exit codes: 0 success, 2 configuration error, 3 numerical failure,
  4 internal consistency / fixture mismatch;
* the only environment variable honoured is ``WORKBENCH_THREADS``, the
  worker count for counterterm sweeps (default 1: serial).

Output is JSON unless a subcommand offers ``--format csv``; either way the
content is deterministic for a fixed config and seed.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .constants import (
    C_constants_with_errors,
    counterterm_h,
    counterterm_table,
    covariance_spec,
    mollifier_spec,
    sweep_csv,
    table_to_json,
)
from .errors import ConfigError, ConsistencyError, NumericError
from .group import gamma_entry, structure_map_from_json
from .hierarchy import dependencies, c_dependencies, expand, expansion_to_json, render_expansion
from .indices import (
    ModelParams,
    bracket,
    choose_kappa,
    enumerate_populated,
    format_multiindex,
    homogeneity,
    is_populated,
    is_purely_polynomial,
    order_length,
    parse_multiindex,
)
from .kernel import checks_grid, kernel_checks, make_grid
from .mc import (
    NoiseSampler,
    bphz_triviality_check,
    covariance_check,
    deterministic_scaling_slope,
    pi_f0_second_moment_check,
    scaling_fit,
)
from .verify import verify_fixtures


def thread_count():
    """Worker count for sweeps, from WORKBENCH_THREADS (default 1)."""
    raw = os.environ.get("WORKBENCH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"WORKBENCH_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"WORKBENCH_THREADS must be >= 1, got {n}")
    return n


# ---------------------------------------------------------------------------
# option plumbing: one table drives the parser, the config file, and help
# ---------------------------------------------------------------------------


def _bool(text):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(part) for part in text.split(","))


def _ints(text):
    return tuple(int(part) for part in text.split(","))


def _choice(*allowed):
    def convert(text):
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, got {text!r}")
        return text

    return convert


class _Opt:
    """One option: flag registration, config-file key, and conversion."""

    def __init__(self, name, convert, default=None, required=False, help=""):
        self.name = name
        self.convert = convert
        self.default = default
        self.required = required
        self.help = help

    def register(self, parser):
        flag = "--" + self.name.replace("_", "-")
        if self.convert is _bool:
            parser.add_argument(
                flag, dest=self.name, action="store_const", const="true",
                default=None, help=self.help,
            )
        else:
            parser.add_argument(
                flag, dest=self.name, type=str, default=None, help=self.help,
            )

    def finalise(self, raw):
        if raw is None:
            return None
        if not isinstance(raw, str):
            return raw
        try:
            return self.convert(raw)
        except ValueError as exc:
            raise ConfigError(f"option {self.name!r}: {exc}") from None


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        mapping[key.strip()] = value.strip()
    return mapping


def _merge(args, opts):
    """Flags override config-file values override declared defaults."""
    cfg = _load_config(args.config) if args.config else {}
    known = {o.name for o in opts}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    out = {}
    for o in opts:
        value = getattr(args, o.name)
        if value is None:
            value = cfg.get(o.name, o.default)
        value = o.finalise(value)
        if value is None and o.required:
            raise ConfigError(f"missing required option {o.name!r}")
        out[o.name] = value
    return out


def _emit(text, path):
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")


def _to_json(doc):
    return json.dumps(doc, indent=1)


# shared option groups -------------------------------------------------------

_OUTPUT = [_Opt("output", str, help="write to this path instead of stdout")]
_FORMAT = [_Opt("format", _choice("json", "csv"), default="json",
                help="output format (default json)")]
_PARAMS = [
    _Opt("alpha", float, required=True, help="regularity exponent in (1/2, 1)"),
    _Opt("d", int, default="1", help="spatial dimension (default 1)"),
    _Opt("lam", float, default="0.4", help="ordering weight in (0, 1/2)"),
    _Opt("allow_rational_alpha", _bool, default="false",
         help="lift the guard against near-rational alpha"),
]
_MOLLIFIER = [
    _Opt("tau", float, required=True, help="mollification scale, > 0"),
    _Opt("m0", float, default="1.0", help="operator coefficient (default 1)"),
    _Opt("mollifier", _choice("semigroup", "anisotropic"), default="semigroup",
         help="mollifier family (default semigroup)"),
    _Opt("eta", float, default="2.0",
         help="anisotropic aspect exponent (default 2)"),
]


def _model_params(cfg):
    return ModelParams(
        alpha=cfg["alpha"], d=cfg["d"], lam=cfg["lam"],
        allow_rational_alpha=cfg["allow_rational_alpha"],
    )


def _specs(cfg):
    cov = covariance_spec(cfg["alpha"], cfg["m0"])
    moll = mollifier_spec(cfg["mollifier"], cfg["tau"], eta=cfg["eta"], m0=cfg["m0"])
    return cov, moll


# ---------------------------------------------------------------------------
# subcommand runners
# ---------------------------------------------------------------------------


def run_enumerate(cfg):
    params = _model_params(cfg)
    indices = enumerate_populated(params, cfg["cutoff"], max_count=cfg["max_count"])
    if cfg["format"] == "csv":
        lines = ["index,homogeneity"]
        lines += [
            f"{format_multiindex(b)},{homogeneity(b, params)!r}" for b in indices
        ]
        return "\n".join(lines)
    return _to_json(
        {
            "alpha": params.alpha,
            "d": params.d,
            "cutoff": cfg["cutoff"],
            "count": len(indices),
            "indices": [format_multiindex(b) for b in indices],
        }
    )


def run_homogeneity(cfg):
    params = _model_params(cfg)
    beta = parse_multiindex(cfg["beta"], expected_arity=params.arity)
    return _to_json(
        {
            "beta": format_multiindex(beta),
            "bracket": bracket(beta),
            "homogeneity": homogeneity(beta, params),
            "order_length": order_length(beta, params),
            "populated": is_populated(beta),
            "purely_polynomial": is_purely_polynomial(beta),
        }
    )


def run_expand(cfg):
    params = _model_params(cfg)
    beta = parse_multiindex(cfg["beta"], expected_arity=params.arity)
    terms = expand(beta, params, cfg["mode"])
    doc = expansion_to_json(params, {beta: terms}, cfg["mode"])
    doc["display"] = render_expansion(beta, terms)
    return _to_json(doc)


def run_deps(cfg):
    params = _model_params(cfg)
    beta = parse_multiindex(cfg["beta"], expected_arity=params.arity)

    def names(indices):
        return [format_multiindex(m) for m in sorted(indices, key=lambda m: m.sort_key())]

    return _to_json(
        {
            "beta": format_multiindex(beta),
            "mode": cfg["mode"],
            "dependencies": names(dependencies(beta, params, cfg["mode"])),
            "c_dependencies": names(c_dependencies(beta, params, cfg["mode"])),
        }
    )


def run_gamma_entry(cfg):
    try:
        doc = json.loads(Path(cfg["map"]).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read structure map {cfg['map']!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"structure map {cfg['map']!r} is not valid JSON: {exc}") from None
    smap = structure_map_from_json(doc)
    arity = smap.params.arity
    beta = parse_multiindex(cfg["beta"], expected_arity=arity)
    gamma = parse_multiindex(cfg["gamma"], expected_arity=arity)
    value = gamma_entry(beta, gamma, smap)
    return _to_json(
        {
            "beta": format_multiindex(beta),
            "gamma": format_multiindex(gamma),
            "value": value if isinstance(value, (int, float)) else str(value),
        }
    )


def run_kappa(cfg):
    params = _model_params(cfg)
    kappa = choose_kappa(params, cutoff=cfg["cutoff"])
    return _to_json({"alpha": params.alpha, "d": params.d, "kappa": kappa})


def run_kernel_check(cfg):
    if (cfg["sizes"] is None) != (cfg["boxes"] is None):
        raise ConfigError("give both sizes and boxes, or neither")
    if cfg["sizes"] is None:
        grid = checks_grid()
    else:
        grid = make_grid(
            d=len(cfg["sizes"]) - 1, sizes=cfg["sizes"], boxes=cfg["boxes"]
        )
    checks = kernel_checks(grid, m0=cfg["m0"], scaling_time=cfg["scaling_time"])
    doc = {key: value for key, value in checks.items() if key != "moment_spread"}
    doc["moment_spread"] = [
        {"orders": list(orders), "theta": theta, "spread": spread}
        for (orders, theta), spread in sorted(checks["moment_spread"].items())
    ]
    return _to_json(doc)


def run_constants(cfg):
    pairs = C_constants_with_errors(cfg["alpha"], cfg["mollifier"], epsrel=cfg["epsrel"])
    (c1, e1), (c2, e2), (c3, e3) = pairs
    if cfg["format"] == "csv":
        header = "alpha,mollifier,C1,err1,C2,err2,C3,err3"
        row = f"{cfg['alpha']!r},{cfg['mollifier']},{c1!r},{e1!r},{c2!r},{e2!r},{c3!r},{e3!r}"
        return header + "\n" + row
    return _to_json(
        {
            "alpha": cfg["alpha"],
            "mollifier": cfg["mollifier"],
            "C1": c1, "err1": e1,
            "C2": c2, "err2": e2,
            "C3": c3, "err3": e3,
        }
    )


def run_counterterm(cfg):
    cases = [(tau, m0) for tau in cfg["tau"] for m0 in cfg["m0"]]

    def worker(case):
        tau, m0 = case
        cov = covariance_spec(cfg["alpha"], m0)
        moll = mollifier_spec(cfg["mollifier"], tau, eta=cfg["eta"], m0=m0)
        return counterterm_table(cov, moll, epsrel=cfg["epsrel"])

    workers = thread_count()
    if workers == 1 or len(cases) == 1:
        tables = [worker(case) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tables = list(pool.map(worker, cases))
    if cfg["format"] == "csv":
        return sweep_csv(tables)
    return _to_json({"tables": [table_to_json(t) for t in tables]})


def run_h_eval(cfg):
    cov, moll = _specs(cfg)
    table = counterterm_table(cov, moll, epsrel=cfg["epsrel"])
    value = counterterm_h(cfg["a"], cfg["a_prime"], cfg["b"], cfg["b_prime"], table)
    return _to_json(
        {
            "h": value,
            "inputs": {
                "a": cfg["a"], "a_prime": cfg["a_prime"],
                "b": cfg["b"], "b_prime": cfg["b_prime"],
            },
            "constants": table_to_json(table),
        }
    )


def run_simulate(cfg):
    sizes, boxes = cfg["sizes"], cfg["boxes"]
    if len(sizes) != len(boxes):
        raise ConfigError(f"sizes {sizes} and boxes {boxes} differ in length")
    grid = make_grid(d=len(sizes) - 1, sizes=sizes, boxes=boxes)
    cov = covariance_spec(cfg["alpha"], cfg["m0"])
    moll = mollifier_spec(cfg["mollifier"], cfg["tau"], eta=cfg["eta"], m0=cfg["m0"])
    sampler = NoiseSampler(grid, cov, moll, cfg["seed"])
    task = cfg["task"]
    x = cfg["x"]
    if task == "covariance":
        report = covariance_check(sampler, n_samples=cfg["samples"])
    elif task == "moment":
        report = pi_f0_second_moment_check(
            sampler, x=x, n_samples=cfg["samples"], dump_path=cfg["dump"]
        )
    elif task == "bphz":
        report = bphz_triviality_check(
            sampler, cfg["t_list"], component=cfg["component"],
            x=x, n_samples=cfg["samples"],
        )
    elif task == "scaling":
        exponent, ci = scaling_fit(
            cfg["component"], sampler, window=cfg["window"],
            n_samples=cfg["samples"], bootstrap=cfg["bootstrap"],
        )
        doc = {
            "task": "scaling",
            "component": cfg["component"],
            "samples": cfg["samples"],
            "exponent": exponent,
            "ci": ci,
        }
        if cfg["component"] == "f0" and grid.d == 1:
            doc["deterministic_slope"] = deterministic_scaling_slope(
                sampler, window=cfg["window"]
            )
        if cfg["format"] == "csv":
            keys = list(doc)
            return ",".join(keys) + "\n" + ",".join(repr(doc[k]) for k in keys)
        return _to_json(doc)
    else:  # unreachable: the option converter restricts the choices
        raise ConfigError(f"unknown simulate task {task!r}")
    return report.to_csv() if cfg["format"] == "csv" else report.to_json()


def run_fixtures_verify(cfg):
    counts = verify_fixtures(fixtures_dir=cfg["fixtures_dir"])
    return _to_json({"status": "ok", "replayed": counts})


# ---------------------------------------------------------------------------
# registration and dispatch
# ---------------------------------------------------------------------------

_BETA = [_Opt("beta", str, required=True, help="multiindex, e.g. f0+f1")]
_MODE = [_Opt("mode", _choice("raw", "reduced"), default="raw",
              help="counterterm columns: raw keeps all, reduced drops parity-killed ones")]

_SUBCOMMANDS = {
    "enumerate": (
        run_enumerate,
        _PARAMS + _FORMAT + _OUTPUT + [
            _Opt("cutoff", float, required=True, help="homogeneity cutoff"),
            _Opt("max_count", int, default="200000",
                 help="abort past this many indices (default 200000)"),
        ],
        "list populated multiindices below a homogeneity cutoff",
    ),
    "homogeneity": (
        run_homogeneity,
        _PARAMS + _BETA + _OUTPUT,
        "gradings and predicates of one multiindex",
    ),
    "expand": (
        run_expand,
        _PARAMS + _BETA + _MODE + _OUTPUT,
        "right-hand-side expansion of one model component",
    ),
    "deps": (
        run_deps,
        _PARAMS + _BETA + _MODE + _OUTPUT,
        "model and constant dependencies of one component",
    ),
    "gamma-entry": (
        run_gamma_entry,
        [
            _Opt("map", str, required=True,
                 help="JSON file with the structure-map families"),
            _Opt("beta", str, required=True, help="row multiindex"),
            _Opt("gamma", str, required=True, help="column multiindex"),
        ] + _OUTPUT,
        "one matrix entry of the recentering map",
    ),
    "kappa": (
        run_kappa,
        _PARAMS + _OUTPUT + [
            _Opt("cutoff", float,
                 help="homogeneity cutoff for the window (default 3 + alpha + 1/2)"),
        ],
        "admissible remainder exponent for the kernel truncation",
    ),
    "kernel-check": (
        run_kernel_check,
        _OUTPUT + [
            _Opt("m0", float, default="1.0", help="operator coefficient"),
            _Opt("sizes", _ints, help="grid sizes, e.g. 512,4096"),
            _Opt("boxes", _floats, help="torus lengths, e.g. 0.0001,4.0"),
            _Opt("scaling_time", float, default="3e-13",
                 help="kernel time for the rescaling identity"),
        ],
        "discrete kernel identities: semigroup, scaling, moments, inversion",
    ),
    "constants": (
        run_constants,
        _FORMAT + _OUTPUT + [
            _Opt("alpha", float, required=True, help="exponent in [1/2, 1)"),
            _Opt("mollifier", _choice("semigroup", "anisotropic"),
                 default="semigroup", help="mollifier family"),
            _Opt("epsrel", float, default="1e-11", help="quadrature tolerance"),
        ],
        "universal small-tau constants (C1, C2, C3) with error bars",
    ),
    "counterterm": (
        run_counterterm,
        _FORMAT + _OUTPUT + [
            _Opt("alpha", float, required=True, help="exponent in (1/2, 1)"),
            _Opt("tau", _floats, required=True,
                 help="mollification scales, comma-separated for a sweep"),
            _Opt("m0", _floats, default="1.0",
                 help="operator coefficients, comma-separated for a sweep"),
            _Opt("mollifier", _choice("semigroup", "anisotropic"),
                 default="semigroup", help="mollifier family"),
            _Opt("eta", float, default="2.0", help="anisotropic aspect exponent"),
            _Opt("epsrel", float, default="1e-9", help="quadrature tolerance"),
        ],
        "finite-tau counterterm constants; sweeps run on WORKBENCH_THREADS workers",
    ),
    "h-eval": (
        run_h_eval,
        _MOLLIFIER + _OUTPUT + [
            _Opt("alpha", float, required=True, help="exponent in (1/2, 1)"),
            _Opt("a", float, required=True, help="quasilinear coefficient a(u)"),
            _Opt("a_prime", float, required=True, help="derivative a'(u)"),
            _Opt("b", float, required=True, help="noise coefficient b(u)"),
            _Opt("b_prime", float, required=True, help="derivative b'(u)"),
            _Opt("epsrel", float, default="1e-9", help="quadrature tolerance"),
        ],
        "pointwise counterterm h from the constant table",
    ),
    "simulate": (
        run_simulate,
        _MOLLIFIER + _FORMAT + _OUTPUT + [
            _Opt("task", _choice("covariance", "moment", "bphz", "scaling"),
                 required=True, help="which estimator to run"),
            _Opt("alpha", float, required=True, help="exponent in (1/2, 1)"),
            _Opt("sizes", _ints, default="64,256",
                 help="grid sizes, time first (default 64,256)"),
            _Opt("boxes", _floats, default="1.0,1.0",
                 help="torus lengths, time first (default 1.0,1.0)"),
            _Opt("seed", int, default="0", help="sampler seed"),
            _Opt("samples", int, default="256", help="Monte Carlo sample count"),
            _Opt("component", _choice("f0", "f0f1"), default="f0",
                 help="model component for bphz/scaling"),
            _Opt("window", _floats,
                 help="fit window lo,hi in torus units (scaling only)"),
            _Opt("bootstrap", int, default="200",
                 help="bootstrap resamples for the scaling ci"),
            _Opt("t_list", _floats, default="1e-6,1e-5,1e-4",
                 help="kernel times for the bphz check"),
            _Opt("x", _ints, help="base grid point, e.g. 0,0"),
            _Opt("dump", str, help="dump the averaged moment field to this path"),
        ],
        "Monte Carlo estimators with same-grid oracles",
    ),
    "fixtures-verify": (
        run_fixtures_verify,
        _OUTPUT + [
            _Opt("fixtures_dir", str,
                 help="replay fixtures from this directory instead of the package"),
        ],
        "replay all golden fixtures; exit 4 on any drift",
    ),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tfrenorm",
        description="workbench for renormalising the stochastic thin-film equation",
    )
    subs = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name, (runner, opts, description) in _SUBCOMMANDS.items():
        sub = subs.add_parser(name, help=description, description=description)
        sub.add_argument(
            "--config", type=str, default=None,
            help="flat key=value file supplying defaults for any option",
        )
        for opt in opts:
            opt.register(sub)
        sub.set_defaults(_runner=runner, _opts=opts)
    return parser


def dispatch(argv):
    args = build_parser().parse_args(argv)
    cfg = _merge(args, args._opts)
    text = args._runner(cfg)
    _emit(text, cfg.get("output"))
    return 0


def main(argv=None):
    try:
        return dispatch(sys.argv[1:] if argv is None else argv)
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
