"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass

from . import experiments as E
from .bounds import PHI_EXPONENTS
from .core import InvalidNeighborhoodError, make_neighborhood
from .oracle import verification_suite
from .simulate import estimate_mean_tau

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3
STOCHASTIC = {"simulate", "sweep", "tau-scaling", "gamma-scan", "decay"}

# built-in defaults, applied after the config file and --paper-scale
DEFAULTS = {
    "n": E.DESK_SCALE["n"],
    "T": E.DESK_SCALE["T"],
    "R": E.DESK_SCALE["R"],
    "replicas": 200,
    "t_max": 10_000_000,
    "m_max": 400,
    "threads": 1,
    "phi_exponent": "2s+2",
    "coupled": False,
    "paper_scale": False,
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    neighborhood: list | None = None
    p: float | None = None
    p_grid: list | None = None
    n: int | None = None
    n_list: list | None = None
    m_list: list | None = None
    T: int | None = None
    R: int | None = None
    replicas: int | None = None
    t_max: int | None = None
    m_max: int | None = None
    seed: int | None = None
    output: str | None = None
    threads: int | None = None
    coupled: bool | None = None
    paper_scale: bool | None = None
    phi_exponent: str | None = None


# value parsers (also used for config-file values)


def offsets(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed offsets {text!r}: expected comma-separated integers") from None
    try:
        return list(make_neighborhood(vals).offsets)
    except InvalidNeighborhoodError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def probability(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1], got {text}")
    return p


def positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer seed: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def p_grid(text: str) -> list[float]:
    """``start:stop:step`` with both ends included, or a comma list."""
    if ":" not in text:
        return [probability(v) for v in text.split(",")]
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be start:stop:step, got {text!r}")
    try:
        start, stop, stepv = (float(v) for v in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed grid {text!r}") from None
    if stepv <= 0 or stop < start:
        raise argparse.ArgumentTypeError("grid needs step > 0 and stop >= start")
    count = int((stop - start) / stepv + 1e-9) + 1
    # round away accumulated binary noise so grid points print cleanly
    digits = max(len(s.split(".")[1]) if "." in s else 0 for s in parts) + 3
    return [probability(repr(round(start + i * stepv, digits))) for i in range(count)]


def int_list(text: str) -> list[int]:
    """Comma list of positive integers, or ``start:stop[:step]`` inclusive."""
    if ":" in text:
        parts = [positive(v) for v in text.split(":")]
        if len(parts) not in (2, 3):
            raise argparse.ArgumentTypeError(f"range must be start:stop[:step], got {text!r}")
        start, stop = parts[0], parts[1]
        stepv = parts[2] if len(parts) == 3 else 1
        return list(range(start, stop + 1, stepv))
    return [positive(v) for v in text.split(",")]


def boolean(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    c = _Parser(add_help=False)
    c.add_argument("-U", "--neighborhood", dest="neighborhood", type=offsets, help="offsets, e.g. -U -1,0,1")
    c.add_argument("--seed", type=seed, help="master seed (required by stochastic commands)")
    c.add_argument("--threads", type=positive, help="worker threads; output does not depend on it")
    c.add_argument("--config", help="key=value file; command-line flags win")
    c.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    c.add_argument("-o", "--output", help="output path (default: stdout)")
    c.add_argument("--coupled", action="store_const", const=True, help="p-independent noise (monotone coupling in p)")
    c.add_argument("--paper-scale", action="store_const", const=True, help="n = T = 100000, R = 2000")
    c.add_argument("--phi-exponent", choices=PHI_EXPONENTS, help="exponent variant in the p2 fixed point")
    return c


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="percpca", description="Percolation PCA bounds, simulations and exact checks.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    common = [_common()]
    sub.add_parser("bounds", parents=common, help="p1 / p2 table")
    s = sub.add_parser("simulate", parents=common, help="mean absorption time on one ring")
    s.add_argument("--p", type=probability)
    s.add_argument("--n", type=positive)
    s.add_argument("--replicas", type=positive)
    s.add_argument("--t-max", dest="t_max", type=positive)
    s = sub.add_parser("sweep", parents=common, help="survival probability over a p grid")
    s.add_argument("--n", type=positive)
    s.add_argument("--T", type=positive)
    s.add_argument("--R", type=positive)
    s.add_argument("--p-grid", dest="p_grid", type=p_grid)
    s = sub.add_parser("tau-scaling", parents=common, help="mean absorption time against n")
    s.add_argument("--p", type=probability)
    s.add_argument("--n-list", dest="n_list", type=int_list)
    s.add_argument("--replicas", type=positive)
    s.add_argument("--t-max", dest="t_max", type=positive)
    s = sub.add_parser("gamma-scan", parents=common, help="edge-speed difference over a p grid")
    s.add_argument("--p-grid", dest="p_grid", type=p_grid)
    s.add_argument("--m-max", dest="m_max", type=positive)
    s.add_argument("--replicas", type=positive)
    s = sub.add_parser("decay", parents=common, help="origin survival decay in m")
    s.add_argument("--p", type=probability)
    s.add_argument("--m-list", dest="m_list", type=int_list)
    s.add_argument("--replicas", type=positive)
    sub.add_parser("verify", parents=common, help="exact oracle cross-checks, JSON report")
    return parser


def _merge_neighborhood_args(argv: list[str]) -> list[str]:
    # "-U -1,0" would otherwise read -1,0 as an option
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in ("-U", "--neighborhood") and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def _read_config(path: str, subparser: argparse.ArgumentParser) -> dict:
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config", "print_config")}
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        action = actions[dest]
        convert = action.type or (boolean if action.const is True else str)
        try:
            values[dest] = convert(val)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
        if action.choices and values[dest] not in action.choices:
            raise UsageError(f"{path}:{lineno}: {key} must be one of {list(action.choices)}")
    return values


def parse(argv: list[str]) -> tuple[RunConfig, bool]:
    """Resolve flags, config file and defaults into a RunConfig (flags > file > presets)."""
    parser = build_parser()
    ns = parser.parse_args(_merge_neighborhood_args(list(argv)))
    if ns.command is None:
        raise UsageError("a command is required: " + ", ".join(sorted(_COMMANDS)))
    given = {k: v for k, v in vars(ns).items() if v is not None and k not in ("config", "print_config")}
    if ns.config:
        sub = parser._subparsers._group_actions[0].choices[ns.command]
        for k, v in _read_config(ns.config, sub).items():
            given.setdefault(k, v)
    if given.get("paper_scale"):
        for k, v in E.FULL_SCALE.items():
            given.setdefault(k, v)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in given.items() if k in known})
    for k, v in DEFAULTS.items():
        if getattr(cfg, k) is None:
            setattr(cfg, k, v)
    if cfg.command in STOCHASTIC and cfg.seed is None:
        raise UsageError(f"{cfg.command} requires --seed")
    return cfg, bool(ns.print_config)


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{cfg.command} requires {flags}")


def _neighborhood(cfg: RunConfig):
    _require(cfg, "neighborhood")
    return cfg.neighborhood


def _bounds(cfg):
    hoods = [cfg.neighborhood] if cfg.neighborhood else E.STANDARD_NEIGHBORHOODS
    return E.bounds_table(hoods, cfg.phi_exponent).to_csv()


def _simulate(cfg):
    _require(cfg, "p", "n")
    U = _neighborhood(cfg)
    est = estimate_mean_tau(cfg.n, U, cfg.p, cfg.replicas, cfg.seed, cfg.t_max, cfg.threads, cfg.coupled)
    meta = dict(
        command="simulate", U=",".join(map(str, U)), seed=cfg.seed, p=E.fmt(cfg.p),
        replicas=cfg.replicas, t_max=cfg.t_max, coupled=int(cfg.coupled),
    )
    rows = [(cfg.n, est.mean, est.stderr, est.censored)]
    return E.csv_text(meta, "n,mean_tau,stderr,censored", rows)


def _sweep(cfg):
    _require(cfg, "p_grid")
    return E.p_sweep(_neighborhood(cfg), cfg.n, cfg.T, cfg.R, cfg.p_grid, cfg.seed, cfg.threads, cfg.coupled).to_csv()


def _tau_scaling(cfg):
    _require(cfg, "p", "n_list")
    table = E.tau_scaling(
        _neighborhood(cfg), cfg.p, cfg.n_list, cfg.replicas, cfg.t_max, cfg.seed, cfg.threads, cfg.coupled
    )
    for flag in table.flags:
        print(f"note: {flag}", file=sys.stderr)
    print(f"regime: {table.regime}", file=sys.stderr)
    return table.to_csv()


def _gamma_scan(cfg):
    _require(cfg, "p_grid")
    scan = E.gamma_scan(_neighborhood(cfg), cfg.p_grid, cfg.m_max, cfg.replicas, cfg.seed, cfg.threads, cfg.coupled)
    print(f"crossing: {scan.crossing()}", file=sys.stderr)
    return scan.to_csv()


def _decay(cfg):
    _require(cfg, "p", "m_list")
    fit = E.subcritical_decay(_neighborhood(cfg), cfg.p, cfg.m_list, cfg.replicas, cfg.seed, cfg.threads, cfg.coupled)
    for flag in fit.flags:
        print(f"note: {flag}", file=sys.stderr)
    print(f"h_hat={fit.h_hat} intercept={fit.intercept} r2={fit.r2} rejected={fit.rejected}", file=sys.stderr)
    return fit.to_csv()


def _verify(cfg):
    report = verification_suite(master_seed=cfg.seed if cfg.seed is not None else 0)
    return json.dumps(report, indent=2) + "\n", all(c["pass"] for c in report.values())


_COMMANDS = {
    "bounds": _bounds,
    "simulate": _simulate,
    "sweep": _sweep,
    "tau-scaling": _tau_scaling,
    "gamma-scan": _gamma_scan,
    "decay": _decay,
    "verify": _verify,
}


def emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg, echo = parse(argv)
        if echo:
            emit(json.dumps(dataclasses.asdict(cfg), indent=2) + "\n", cfg.output)
            return EXIT_OK
        result = _COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    passed = True
    if isinstance(result, tuple):
        result, passed = result
    try:
        emit(result, cfg.output)
    except OSError as exc:
        print(f"error: cannot write {cfg.output}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if passed else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
