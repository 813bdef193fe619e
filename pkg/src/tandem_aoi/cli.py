"""Command-line entry point: ``tandem-aoi {analyze,simulate,sweep,validate}``.

Settings come from built-in defaults, then an optional JSON config file
(``--config``, flat keys named as the :class:`RunConfig` fields), then
command-line flags.  Output files go to ``--out``, falling back to the
``TANDEM_AOI_OUT`` environment variable and finally ``./results``.

Exit codes: 0 success, 1 validation failure, 2 invalid or unstable input.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import analytics as an
from .errors import NumericError, ResourceError, TandemAoIError
from .experiments import DEFAULT_P, DEFAULT_RHO, SweepSpec, find_aoi_minimum, run_sweep
from .params import SystemParams
from .simulator import run_simulation, write_trace
from .transforms import parse_service
from .validation import run_validation

ENV_OUT = "TANDEM_AOI_OUT"
EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
COMMANDS = ("analyze", "simulate", "sweep", "validate")


@dataclass
class RunConfig:
    """Flat run configuration; defaults give exponential unit-mean service and 1e5 packets."""

    command: str = "analyze"
    lam: float = 0.5
    p: float = 0.5
    mu: float = 1.0
    b1: float = 1.0
    b2: float = 1.0
    svc1: str = "exp"
    svc2: str = "exp"
    rho: float | None = None
    packets: int = 100_000
    seed: int = 1
    warmup: float = 0.1
    out: str | None = None
    verbosity: int = 0
    p_values: list = field(default_factory=lambda: list(DEFAULT_P))
    rho_values: list = field(default_factory=lambda: list(DEFAULT_RHO))
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    workers: int = 1
    trace: bool = False
    inject_priority_inversion: bool = False

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def params(self) -> SystemParams:
        svc1 = parse_service(self.svc1, self.b1)
        svc2 = parse_service(self.svc2, self.b2)
        if self.rho is not None:
            return SystemParams.from_utilization(self.rho, self.p, self.mu, svc1, svc2)
        return SystemParams(self.lam, self.p, self.mu, svc1, svc2)

    def out_dir(self) -> str:
        return self.out or os.environ.get(ENV_OUT) or "results"


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--lambda", dest="lam", type=float, help="total generation rate")
    g.add_argument("--rho", type=float, help="target second-hop load (overrides --lambda)")
    g.add_argument("--p", type=float, help="fraction of class-1 packets")
    g.add_argument("--mu", type=float, help="first-hop service rate")
    g.add_argument("--b1", type=float, help="mean class-1 service at hop 2")
    g.add_argument("--b2", type=float, help="mean class-2 service at hop 2")
    g.add_argument("--svc1", help="class-1 law: exp, det, erlang:K, gamma:SHAPE, hyperexp:SCV")
    g.add_argument("--svc2", help="class-2 law, same forms as --svc1")
    r = common.add_argument_group("run")
    r.add_argument("--packets", type=int, help="departures per simulation")
    r.add_argument("--seed", type=int, help="root seed")
    r.add_argument("--warmup", type=float, help="fraction of departures discarded")
    r.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./results)")
    r.add_argument("--config", help="JSON file with RunConfig keys")
    r.add_argument("-v", "--verbose", dest="verbosity", action="count", help="more logging")

    parser = argparse.ArgumentParser(prog="tandem-aoi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="closed-form and transform results for one point")
    sim = sub.add_parser("simulate", parents=[common], help="one simulation run")
    sim.add_argument("--trace", action="store_true", default=None, help="write the event trace")
    sw = sub.add_parser("sweep", parents=[common], help="analytic vs simulated over a (p, rho) grid")
    sw.add_argument("--p-values", dest="p_values", type=_floats, help="comma-separated p grid")
    sw.add_argument("--rho-values", dest="rho_values", type=_floats, help="comma-separated rho grid")
    sw.add_argument("--seeds", type=_ints, help="comma-separated replication seeds")
    sw.add_argument("--workers", type=int, help="parallel processes")
    val = sub.add_parser("validate", parents=[common], help="self-check suite (10^4 packets by default)")
    val.add_argument(
        "--inject-priority-inversion",
        dest="inject_priority_inversion",
        action="store_true",
        default=None,
        help="fault injection: serve class 2 first (the priority check must fail)",
    )
    return parser


def resolve_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for f in dataclasses.fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            data[f.name] = val
    data["command"] = args.command
    if args.command == "validate" and args.packets is None and "packets" not in data:
        data["packets"] = 10_000
    return RunConfig.from_dict(data)


def cmd_analyze(cfg: RunConfig) -> int:
    P = cfg.params()
    grid = None
    if cfg.out:
        scale = max(v for v in (an.mean_A2(P) if P.has_class2 else 0, an.mean_A1(P) if P.has_class1 else 0))
        grid = np.linspace(0, 6 * scale, 241)
    rep = an.analyze(P, cdf_grid=grid)
    print(rep.format())
    if grid is not None:
        os.makedirs(cfg.out, exist_ok=True)
        path = os.path.join(cfg.out, "analytic_cdf.csv")
        cols = [("t", grid)]
        for j, cm in ((1, rep.class1), (2, rep.class2)):
            if cm is not None:
                cols += [(f"{k}{j}", cm.cdf[k]) for k in ("T", "A", "D")]
        with open(path, "w") as fh:
            fh.write(",".join(c for c, _ in cols) + "\n")
            for i in range(len(grid)):
                fh.write(",".join(f"{v[i]:.10g}" for _, v in cols) + "\n")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    P = cfg.params()
    rep = run_simulation(P, cfg.packets, cfg.seed, cfg.warmup, trace=cfg.trace)
    print(rep.format())
    if cfg.out or cfg.trace:
        out = cfg.out_dir()
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, "simulation.json")
        with open(path, "w") as fh:
            json.dump(rep.summary(), fh, indent=2, sort_keys=True)
        print(f"wrote {path}")
        if cfg.trace:
            tpath = os.path.join(out, "trace.csv")
            write_trace(rep, tpath)
            print(f"wrote {tpath}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    spec = SweepSpec(
        p_values=tuple(cfg.p_values),
        rho_values=tuple(cfg.rho_values),
        b=1 / cfg.mu,
        b1=cfg.b1,
        b2=cfg.b2,
        svc1=cfg.svc1,
        svc2=cfg.svc2,
        n_packets=cfg.packets,
        seeds=tuple(cfg.seeds),
        warmup_fraction=cfg.warmup,
        out_dir=cfg.out_dir(),
        workers=cfg.workers,
    )
    res = run_sweep(spec)
    for path in res.files:
        print(f"wrote {path}")
    if len(spec.rho_values) >= 5:
        for p in spec.p_values:
            if p <= 0:
                continue
            sub = dataclasses.replace(spec, p_values=(p,), out_dir=None)
            m = find_aoi_minimum(sub, 1, res)
            where = "interior" if m.interior else "boundary"
            print(f"class-1 age minimum at p={p:g}: rho={m.rho:g} (rho1={m.rho1:.3f}), {m.value:.4f}, {where}")
    for p, rho, why in res.skipped:
        print(f"skipped p={p:g} rho={rho:g}: {why}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    results = run_validation(cfg.params(), cfg.packets, cfg.seed, cfg.inject_priority_inversion)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed: {', '.join(failed)}")
        return EXIT_FAIL
    print("all checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbosity or 0, 2), format="%(levelname)s %(name)s: %(message)s")
    if not cfg.verbosity:
        logging.getLogger("tandem_aoi").setLevel(logging.ERROR)
    handler = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep, "validate": cmd_validate}
    try:
        return handler[cfg.command](cfg)
    except (NumericError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except TandemAoIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
