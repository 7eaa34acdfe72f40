"""Command-line entry point: learn, verify, explore, simulate, render.

Artifact-producing commands write a manifest (command, seed, tool version,
timestamps) into the output directory before doing any work; all other
artifacts are byte-deterministic functions of the inputs and the seed.
Defaults can be overridden by SCENO_* environment variables, and explicit
flags beat both.

Exit codes: 0 = SAFE / success, 1 = error, 2 = UNSAFE, 3 = UNKNOWN.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ContractViolation, ScenoError
from .explorer import GridSpec, csv_to_svg, explore, heatmap_to_csv, safe_region
from .mlp import Mlp, TrainConfig, load_mlp, save_mlp
from .pipeline import LearnConfig, VerifyConfig, learn_surrogate
from .scenario import (
    BlackBox,
    ParamSpace,
    ScenarioConfig,
    load_scenario_config,
    scenario_config_dict,
)
from .subproc import SubprocessBlackBox
from .testbeds import (
    DEFAULT_CLOCK,
    DEFAULT_CONTROLLER,
    braking_params,
    builtin_blackbox,
    crossing_params,
    default_space,
    simulate_braking,
    simulate_crossing,
)
from .verifier import SAFE, UNKNOWN, UNSAFE, certify, unit_box, verification_report

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSAFE = 2
EXIT_UNKNOWN = 3

_STATUS_EXIT = {SAFE: EXIT_OK, UNSAFE: EXIT_UNSAFE, UNKNOWN: EXIT_UNKNOWN}


def _env(name: str, cast, fallback):
    raw = os.environ.get("SCENO_" + name)
    if raw is None:
        return fallback
    return cast(raw)


def _dump_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: str | None
    seed: int
    out_dir: str
    tool_version: str
    created_utc: str
    extra: dict


def write_manifest(out_dir: Path, command: str, seed: int, config: str | None, **extra) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=command,
        config=config,
        seed=seed,
        out_dir=str(out_dir),
        tool_version=__version__,
        created_utc=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        extra=extra,
    )
    (out_dir / "manifest.json").write_text(json.dumps(asdict(manifest), sort_keys=True, indent=2))


class CachingBlackBox:
    """Append-only on-disk (theta -> rho) record for resumable learning.

    Every evaluation is persisted as soon as it returns, keyed by the decimal
    serialization of theta, so a re-run with the same seed replays recorded
    values instead of re-simulating.
    """

    def __init__(self, inner: BlackBox, path: Path):
        self.inner = inner
        self.path = path
        self._cache: dict[str, float] = {}
        if path.exists():
            for line in path.read_text().splitlines():
                if not line:
                    continue
                key, _, val = line.rpartition("\t")
                self._cache[key] = float(val)
        self._fh = open(path, "a", encoding="ascii")

    @staticmethod
    def _key(theta: np.ndarray) -> str:
        return ",".join(repr(float(v)) for v in theta)

    def evaluate(self, theta: np.ndarray) -> float:
        key = self._key(theta)
        if key in self._cache:
            return self._cache[key]
        rho = self.inner.evaluate(theta)
        self._cache[key] = rho
        self._fh.write(f"{key}\t{rho!r}\n")
        self._fh.flush()
        return rho

    def close(self) -> None:
        self._fh.close()

    def as_blackbox(self) -> BlackBox:
        return BlackBox(
            evaluate=self.evaluate,
            descriptor=f"cached:{self.inner.descriptor}",
            concurrency_safe=False,
        )


def make_blackbox(cfg: ScenarioConfig) -> tuple[BlackBox, SubprocessBlackBox | None]:
    """Instantiate the black box a scenario config points at."""
    kind = cfg.blackbox.get("kind")
    if kind == "builtin":
        if "scenario" not in cfg.blackbox:
            raise ContractViolation("missing config field 'scenario' in blackbox")
        return builtin_blackbox(cfg.blackbox["scenario"], cfg.space), None
    if kind == "subprocess":
        if "command" not in cfg.blackbox:
            raise ContractViolation("missing config field 'command' in blackbox")
        child = SubprocessBlackBox(
            command=list(cfg.blackbox["command"]),
            max_concurrency=int(cfg.blackbox.get("max_concurrency", 1)),
            timeout=float(cfg.blackbox.get("timeout", 60.0)),
        )
        return child.as_blackbox(), child
    raise ContractViolation(f"unsupported blackbox kind {kind!r}")


def _pick(cli_value, config: dict, key: str, default):
    if cli_value is not None:
        return cli_value
    if key in config:
        return config[key]
    return default


def run_learn(args) -> int:
    cfg = load_scenario_config(args.config)
    learn_section = {}
    with open(args.config, encoding="utf-8") as fh:
        learn_section = json.load(fh).get("learn", {})

    seed = args.seed if args.seed is not None else _env("SEED", int, 0)
    out_dir = Path(args.out if args.out is not None else _env("OUT", str, "sceno-out"))
    write_manifest(out_dir, "learn", seed, str(args.config), scenario=cfg.name)

    learn_cfg = LearnConfig(
        n_init=int(_pick(args.n_init, learn_section, "n_init", 900)),
        n_inc=int(_pick(args.n_inc, learn_section, "n_inc", 40)),
        n_ex=int(_pick(args.n_ex, learn_section, "n_ex", 10)),
        max_iters=int(_pick(args.max_iters, learn_section, "max_iters", 10)),
        lambda_target=float(_pick(args.lambda_target, learn_section, "lambda_target", 0.0)),
        epsilon=float(_pick(args.epsilon, learn_section, "epsilon", 0.01)),
        eta=float(_pick(args.eta, learn_section, "eta", 0.001)),
        seed=seed,
    )
    hidden = tuple(
        int(h) for h in str(_pick(args.hidden, learn_section, "hidden", "100,100")).split(",")
    )
    train_cfg = TrainConfig(
        epochs=int(_pick(args.epochs, learn_section, "epochs", 200)),
        batch=int(_pick(args.batch, learn_section, "batch", 256)),
        lr=float(_pick(args.lr, learn_section, "lr", 1e-3)),
        l2=float(_pick(args.l2, learn_section, "l2", 0.0)),
    )

    inner, child = make_blackbox(cfg)
    cache = CachingBlackBox(inner, out_dir / "dataset.partial.csv")
    try:
        result = learn_surrogate(
            cache.as_blackbox(), cfg.space, learn_cfg, hidden=hidden, train_cfg=train_cfg
        )
    finally:
        cache.close()
        if child is not None:
            child.close()

    model_path = out_dir / "model.json"
    save_mlp(result.model, model_path)
    cert_doc = result.certificate.to_dict()
    cert_doc["scenario"] = cfg.name
    cert_doc["model_ref"] = _sha256_file(model_path)
    _dump_json(cert_doc, out_dir / "certificate.json")

    m = cfg.space.m
    with open(out_dir / "dataset.csv", "w", encoding="ascii") as fh:
        fh.write(",".join(f"theta_{i}" for i in range(m)) + ",rho\n")
        for theta, rho in zip(result.dataset.thetas, result.dataset.rhos):
            fh.write(",".join(repr(float(v)) for v in theta) + f",{float(rho)!r}\n")

    cert = result.certificate
    print(
        f"learned surrogate for {cfg.name!r}: lambda_star={cert.lambda_star:.6g} "
        f"epsilon={cert.epsilon:g} eta={cert.eta:g} K={cert.k}"
    )
    print(f"artifacts in {out_dir}: model.json, certificate.json, dataset.csv")
    return EXIT_OK


def run_verify(args) -> int:
    model_path = Path(args.model)
    model = load_mlp(model_path)
    with open(args.cert, encoding="utf-8") as fh:
        cert_doc = json.load(fh)
    for key in ("lambda_star", "epsilon", "eta", "k"):
        if key not in cert_doc:
            raise ContractViolation(f"missing config field {key!r} in certificate")
    model_ref = cert_doc.get("model_ref")
    if model_ref and model_ref != _sha256_file(model_path):
        raise ContractViolation(
            "certificate/model pairing is stale: model_ref digest does not match the model file"
        )

    tau = args.tau if args.tau is not None else _env("TAU", float, 0.1)
    tol = args.tol if args.tol is not None else _env("TOL", float, VerifyConfig.tol)
    budget = args.budget if args.budget is not None else _env("BUDGET", int, VerifyConfig.budget)
    lam = float(cert_doc["lambda_star"])
    threshold = tau + lam
    result = certify(model, unit_box(model.input_dim), threshold, tol=tol, budget=budget)
    report = verification_report(result, threshold, tol, budget)
    report.update(
        {
            "tau": tau,
            "lambda_star": lam,
            "epsilon": cert_doc["epsilon"],
            "eta": cert_doc["eta"],
            "counterexample_value_minus_lambda": None
            if result.counterexample_value is None
            else result.counterexample_value - lam,
        }
    )
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return _STATUS_EXIT[result.status]


def run_explore(args) -> int:
    model = load_mlp(args.model)
    try:
        dim_a, dim_b = (int(d) for d in args.dims.split(","))
    except ValueError as err:
        raise ContractViolation(f"--dims must be 'a,b' integers, got {args.dims!r}") from err
    grid = args.grid if args.grid is not None else _env("GRID", int, 20)
    tau = args.tau if args.tau is not None else _env("TAU", float, 0.1)
    tol = args.tol if args.tol is not None else _env("TOL", float, VerifyConfig.tol)
    budget = args.budget if args.budget is not None else _env("BUDGET", int, VerifyConfig.budget)
    out_dir = Path(args.out if args.out is not None else _env("OUT", str, "sceno-out"))
    write_manifest(out_dir, "explore", 0, None, model=str(args.model), dims=args.dims, grid=grid)

    spec = GridSpec(dim_a=dim_a, dim_b=dim_b, l=grid, m=model.input_dim)
    heatmap = explore(model, spec, tau, tol=tol, budget=budget)
    csv_text = heatmap_to_csv(heatmap)
    csv_path = out_dir / "heatmap.csv"
    csv_path.write_text(csv_text)
    if args.svg:
        Path(args.svg).write_text(csv_to_svg(csv_text))
    n_safe = len(safe_region(heatmap))
    print(
        f"explored {grid}x{grid} cells over dims ({dim_a},{dim_b}): "
        f"{n_safe} certified safe, max indicator {heatmap.rho_indicator.max():.6g}"
    )
    print(f"heatmap written to {csv_path}")
    return EXIT_OK


def run_simulate(args) -> int:
    if args.emit_config:
        space = default_space(args.scenario)
        cfg = ScenarioConfig(
            name=args.scenario,
            tau=0.1,
            space=space,
            blackbox={"kind": "builtin", "scenario": args.scenario},
        )
        doc = scenario_config_dict(cfg)
        doc["defaults"] = {
            "ego_speed": 10.0,
            "reaction_delay": DEFAULT_CONTROLLER.reaction_delay,
            "ego_decel": DEFAULT_CONTROLLER.ego_decel,
            "dt": DEFAULT_CLOCK.dt,
            "t_max": DEFAULT_CLOCK.t_max,
        }
        Path(args.emit_config).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
        print(f"wrote default {args.scenario} scenario config to {args.emit_config}")
        return EXIT_OK

    if args.theta is None:
        raise ContractViolation("--theta is required unless --emit-config is given")
    theta = np.array([float(v) for v in args.theta.split(",")])
    space = default_space(args.scenario)
    phys = space.denormalize(theta)
    if args.scenario == "braking":
        trace = simulate_braking(braking_params(phys), DEFAULT_CONTROLLER, DEFAULT_CLOCK)
    else:
        trace = simulate_crossing(crossing_params(phys), DEFAULT_CONTROLLER, DEFAULT_CLOCK)
    rho = float(trace.values.min())
    print(
        json.dumps(
            {
                "scenario": args.scenario,
                "theta": [float(v) for v in theta],
                "physical": [float(v) for v in phys],
                "rho": rho,
                "steps": len(trace),
            }
        )
    )
    return EXIT_OK


def run_render(args) -> int:
    svg = csv_to_svg(Path(args.heatmap).read_text())
    Path(args.out).write_text(svg)
    print(f"rendered {args.heatmap} to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceno",
        description="PAC surrogate learning and sound verification for scenario fitness functions",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a certified surrogate from a scenario config")
    p.add_argument("--config", required=True, help="scenario config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--n-init", dest="n_init", type=int, default=None)
    p.add_argument("--n-inc", dest="n_inc", type=int, default=None)
    p.add_argument("--n-ex", dest="n_ex", type=int, default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p.add_argument("--lambda-target", dest="lambda_target", type=float, default=None)
    p.add_argument("--hidden", default=None, help="comma-separated hidden widths, e.g. 100,100")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.set_defaults(handler=run_learn)

    p = sub.add_parser("verify", help="certify f >= tau + lambda_star over the unit box")
    p.add_argument("--model", required=True)
    p.add_argument("--cert", required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out", default=None, help="report JSON path (also printed)")
    p.set_defaults(handler=run_verify)

    p = sub.add_parser("explore", help="grid the space and certify per-cell indicators")
    p.add_argument("--model", required=True)
    p.add_argument("--dims", required=True, help="two associated dimensions, e.g. 0,3")
    p.add_argument("--grid", type=int, default=None, help="grid side l")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--svg", default=None, help="also render an SVG to this path")
    p.set_defaults(handler=run_explore)

    p = sub.add_parser("simulate", help="run one builtin testbed simulation")
    p.add_argument("--scenario", required=True, choices=["braking", "crossing"])
    p.add_argument("--theta", default=None, help="comma-separated normalized parameters")
    p.add_argument(
        "--emit-config", default=None, help="write the default scenario config JSON and exit"
    )
    p.set_defaults(handler=run_simulate)

    p = sub.add_parser("render", help="render a heatmap CSV as SVG")
    p.add_argument("--heatmap", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=run_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ScenoError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
