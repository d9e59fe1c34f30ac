"""Command-line entry points.

Subcommands cover the individual stages (simulate, fit, design-control) and
the full closed loop (discriminate, tournament), plus serving a simulated
reference over TCP and replaying a recorded session.  Experiments are
described by TOML files; a few ready-made ones ship inside the package and
can be named without a path.

Exit codes: 0 success / conclusive verdict, 1 inconclusive verdict,
2 configuration or I/O problem, 3 reference failure mid-run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python 3.10
    import tomli as tomllib

from . import __version__
from .control import ControlDesignConfig, ControlMemory, design_control, objective
from .discrimination import (DiscriminationReport, StoppingThresholds, VerdictStatus,
                             canonical_json, record_to_dict, report_to_dict,
                             run_discrimination, tournament)
from .errors import ConfigurationError, ContractError, ProtocolError, ReferenceFailure
from .estimation import Dataset, FitConfig, fit
from .grid import (ControlSignal, TimeGrid, box_pulse, constant_signal,
                   random_piecewise_constant)
from .kinetics import ModelInstance, ModelKind, random_parameters, table_params
from .reference import SimulatedReference
from .simulate import (StochasticConfig, read_trajectory_csv, simulate,
                       simulate_stochastic, write_control_csv, write_ensemble_csv,
                       write_trajectory_csv)
from .wire import ReferenceServer, connect

log = logging.getLogger("opsinloop")

ENDPOINT_ENV_VAR = "OPSINLOOP_ENDPOINT"

EXIT_OK = 0
EXIT_INCONCLUSIVE = 1
EXIT_CONFIG = 2
EXIT_REFERENCE = 3


# --------------------------------------------------------------- helpers

def _parse_theta(kind: ModelKind, spec, rng: np.random.Generator) -> np.ndarray:
    """Accepts "table", "random", a comma list, or a TOML float array."""
    if isinstance(spec, str):
        if spec == "table":
            return table_params(kind)
        if spec == "random":
            return random_parameters(kind, rng)
        try:
            values = [float(v) for v in spec.split(",")]
        except ValueError:
            raise ConfigurationError(f"cannot parse parameter list {spec!r}") from None
        return np.asarray(values)
    if isinstance(spec, (list, tuple)):
        return np.asarray([float(v) for v in spec])
    raise ConfigurationError(f"unsupported parameter spec {spec!r}")


def _candidate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 100 + index)))


def _require_keys(section: dict, allowed: set[str], name: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in [{name}]: {sorted(unknown)}")


def _load_config(spec: str) -> dict:
    """Load a TOML experiment file from a path or from the bundled configs."""
    path = Path(spec)
    if path.exists():
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    name = spec if spec.endswith(".toml") else f"{spec}.toml"
    bundled = resources.files("opsinloop").joinpath("configs", name)
    if bundled.is_file():
        return tomllib.loads(bundled.read_text(encoding="utf-8"))
    raise ConfigurationError(f"config {spec!r} is neither a file nor a bundled config")


def _build_grid(cfg: dict) -> TimeGrid:
    section = cfg.get("grid", {})
    _require_keys(section, {"dt", "n_steps"}, "grid")
    return TimeGrid(section.get("dt", 0.05), section.get("n_steps", 1000))


def _build_thresholds(cfg: dict, iterations_override=None) -> StoppingThresholds:
    section = dict(cfg.get("thresholds", {}))
    _require_keys(section, {"i_max", "loss_max", "loss_max_rel", "delta_max"}, "thresholds")
    if iterations_override is not None:
        section["i_max"] = iterations_override
    return StoppingThresholds(
        i_max=section.get("i_max", 40),
        loss_max=section.get("loss_max"),
        loss_max_rel=section.get("loss_max_rel", 1e-2),
        delta_max=section.get("delta_max", 1e-3),
    )


def _build_fit(cfg: dict) -> FitConfig:
    section = cfg.get("fit", {})
    allowed = {"n_grad", "step_size", "beta1", "beta2", "epsilon", "history_mode"}
    _require_keys(section, allowed, "fit")
    return FitConfig(**{k: section[k] for k in allowed if k in section})


def _build_control(cfg: dict) -> ControlDesignConfig:
    section = cfg.get("control", {})
    allowed = {"c1", "c2", "u_min_energy", "u_hi", "memory_size", "restarts",
               "max_outer", "step_init", "tol"}
    _require_keys(section, allowed, "control")
    return ControlDesignConfig(**{k: section[k] for k in allowed if k in section})


def _build_candidates(cfg: dict, seed: int) -> list[ModelInstance]:
    entries = cfg.get("candidates", [])
    if not isinstance(entries, list) or not entries:
        raise ConfigurationError("config must declare at least one [[candidates]] entry")
    out = []
    for index, entry in enumerate(entries):
        _require_keys(entry, {"kind", "init"}, "candidates")
        if "kind" not in entry:
            raise ConfigurationError("every candidate needs a kind")
        kind = ModelKind.from_label(entry["kind"])
        theta = _parse_theta(kind, entry.get("init", "random"), _candidate_rng(seed, index))
        out.append(ModelInstance(kind, theta))
    return out


def _split_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise ConfigurationError(f"endpoint must look like host:port, got {endpoint!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigurationError(f"endpoint port is not an integer: {endpoint!r}") from None


def _build_simulated_reference(cfg: dict, grid: TimeGrid) -> SimulatedReference:
    section = cfg.get("reference", {})
    allowed = {"mode", "kind", "params", "alpha", "repeats", "seed", "u_hi", "endpoint"}
    _require_keys(section, allowed, "reference")
    if "kind" not in section:
        raise ConfigurationError("[reference] needs a kind for simulated mode")
    kind = ModelKind.from_label(section["kind"])
    ref_seed = int(section.get("seed", 0))
    theta = _parse_theta(kind, section.get("params", "table"),
                         np.random.default_rng(ref_seed))
    return SimulatedReference(
        kind, theta, grid,
        alpha=float(section.get("alpha", 0.0)),
        repeats=int(section.get("repeats", 1)),
        seed=ref_seed,
        u_hi=float(section.get("u_hi", 10.0)),
    )


def _resolve_endpoint(cfg: dict, args) -> str | None:
    """Flag > environment > config; any of them switches the run to remote mode."""
    if getattr(args, "endpoint", None):
        return args.endpoint
    env = os.environ.get(ENDPOINT_ENV_VAR)
    if env:
        return env
    section = cfg.get("reference", {})
    if section.get("mode") == "remote":
        endpoint = section.get("endpoint")
        if not endpoint:
            raise ConfigurationError("[reference] mode=remote needs an endpoint")
        return endpoint
    return None


def _config_echo(cfg: dict, seed: int, thresholds: StoppingThresholds,
                 fit_cfg: FitConfig, ctrl_cfg: ControlDesignConfig,
                 grid: TimeGrid, endpoint: str | None) -> dict:
    """The resolved experiment settings, echoed into reports."""
    return {
        "seed": int(seed),
        "grid": {"dt": grid.dt, "n_steps": grid.n_steps},
        "candidates": [
            {"kind": entry.get("kind"), "init": entry.get("init", "random")}
            for entry in cfg.get("candidates", [])
        ],
        "reference": (
            {"mode": "remote", "endpoint": endpoint}
            if endpoint is not None else
            {k: cfg.get("reference", {}).get(k) for k in
             ("mode", "kind", "params", "alpha", "repeats", "seed", "u_hi")}
        ),
        "thresholds": {
            "i_max": thresholds.i_max,
            "loss_max": thresholds.loss_max,
            "loss_max_rel": thresholds.loss_max_rel,
            "delta_max": thresholds.delta_max,
        },
        "fit": {
            "n_grad": fit_cfg.n_grad,
            "step_size": fit_cfg.step_size,
            "beta1": fit_cfg.beta1,
            "beta2": fit_cfg.beta2,
            "epsilon": fit_cfg.epsilon,
            "history_mode": fit_cfg.history_mode,
        },
        "control": {
            "c1": ctrl_cfg.c1,
            "c2": ctrl_cfg.c2,
            "u_min_energy": ctrl_cfg.u_min_energy,
            "u_hi": ctrl_cfg.u_hi,
            "memory_size": ctrl_cfg.memory_size,
            "restarts": ctrl_cfg.restarts,
            "max_outer": ctrl_cfg.max_outer,
            "step_init": ctrl_cfg.step_init,
            "tol": ctrl_cfg.tol,
        },
    }


def _grid_from_args(args) -> TimeGrid:
    return TimeGrid(args.dt, args.steps)


def _control_from_args(args, grid: TimeGrid, seed: int) -> ControlSignal:
    bounds = (0.0, max(10.0, float(args.amplitude)))
    if args.control == "box":
        t_off = args.t_off if args.t_off is not None else 0.2 * grid.horizon
        return box_pulse(grid, args.amplitude, args.t_on, t_off, bounds)
    if args.control == "constant":
        return constant_signal(grid, args.amplitude, bounds)
    if args.control == "random":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 7)))
        return random_piecewise_constant(grid, rng, args.segments, 0.0,
                                         float(args.amplitude), bounds)
    raise ConfigurationError(f"unknown control shape {args.control!r}")


def _out_or_stdout(args):
    return args.out if args.out is not None else sys.stdout


def _print_json(payload: dict, out) -> None:
    text = canonical_json(payload) + "\n"
    if hasattr(out, "write"):
        out.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# ------------------------------------------------------------- subcommands

def _cmd_simulate(args) -> int:
    grid = _grid_from_args(args)
    kind = ModelKind.from_label(args.model)
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 1)))
    theta = _parse_theta(kind, args.theta, rng)
    control = _control_from_args(args, grid, seed)
    if args.alpha > 0.0:
        ensemble = simulate_stochastic(
            kind, theta, control,
            StochasticConfig(alpha=args.alpha, n_paths=args.paths, seed=seed))
        write_ensemble_csv(_out_or_stdout(args), control, ensemble)
        log.info("simulated %d stochastic paths (clamp fraction %.3g)",
                 args.paths, ensemble.clamp_fraction)
    else:
        out = simulate(kind, theta, control)
        write_trajectory_csv(_out_or_stdout(args), control, out.observations)
        log.info("simulated deterministic trajectory on %d points", grid.n_points)
    return EXIT_OK


def _cmd_fit(args) -> int:
    kind = ModelKind.from_label(args.model)
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 2)))
    theta0 = _parse_theta(kind, args.theta, rng)
    _, control, measured = read_trajectory_csv(args.data)
    config = FitConfig(n_grad=args.n_grad, history_mode=args.history)
    report = fit(kind, theta0, [Dataset(control, measured)], config)
    payload = {
        "kind": kind.label,
        "theta_init": [float(v) for v in theta0],
        "theta": [float(v) for v in report.theta],
        "loss": report.loss,
        "max_param_increment": report.max_param_increment,
        "aborted": report.aborted,
        "n_grad": config.n_grad,
    }
    _print_json(payload, _out_or_stdout(args))
    log.info("fit finished with loss %.6g", report.loss)
    return EXIT_OK


def _cmd_design_control(args) -> int:
    grid = _grid_from_args(args)
    kind1 = ModelKind.from_label(args.model1)
    kind2 = ModelKind.from_label(args.model2)
    seed = args.seed if args.seed is not None else 0
    rng1 = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 3)))
    rng2 = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 4)))
    model1 = ModelInstance(kind1, _parse_theta(kind1, args.theta1, rng1))
    model2 = ModelInstance(kind2, _parse_theta(kind2, args.theta2, rng2))
    cfg = ControlDesignConfig()
    memory = ControlMemory(cfg.memory_size)
    signal = design_control(model1, model2, memory, grid, cfg,
                            seed=np.random.SeedSequence(entropy=(seed, 5)))
    write_control_csv(_out_or_stdout(args), signal)
    log.info("designed stimulus with objective %.6g",
             objective(signal, model1, model2, memory, cfg))
    return EXIT_OK


class _RunWriter:
    """Streams per-iteration artifacts while the loop runs."""

    def __init__(self, out_dir: Path | None):
        self.out_dir = out_dir
        self.control_paths: list[str] = []
        self._log_file = None
        if out_dir is not None:
            (out_dir / "controls").mkdir(parents=True, exist_ok=True)
            self._log_file = open(out_dir / "log.jsonl", "w", encoding="utf-8",
                                  newline="\n")

    def on_iteration(self, record) -> None:
        rel = None
        if self.out_dir is not None:
            rel = f"controls/iter_{record.index:04d}.csv"
            write_control_csv(self.out_dir / rel, record.control)
        self.control_paths.append(rel)
        if self._log_file is not None:
            self._log_file.write(canonical_json(record_to_dict(record, rel)) + "\n")
            self._log_file.flush()
        log.info("iter %d: postfit losses %s, verdict %s", record.index,
                 [f"{v:.3g}" for v in record.loss_postfit], record.verdict.status.value)

    def close(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None


def _open_reference(cfg: dict, grid: TimeGrid, endpoint: str | None):
    """Returns (reference, closer).  Remote endpoints are dialed eagerly so
    an unreachable peer fails before any output exists."""
    if endpoint is None:
        return _build_simulated_reference(cfg, grid), lambda: None
    host, port = _split_endpoint(endpoint)
    try:
        remote = connect(host, port)
    except OSError as exc:
        raise ConfigurationError(f"cannot reach reference at {endpoint}: {exc}") from exc
    return remote, remote.close


def _verdict_exit_code(report: DiscriminationReport) -> int:
    if report.truncated:
        return EXIT_REFERENCE
    if report.verdict.status is VerdictStatus.CONCLUSIVE:
        return EXIT_OK
    return EXIT_INCONCLUSIVE


def _cmd_discriminate(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    grid = _build_grid(cfg)
    thresholds = _build_thresholds(cfg, args.iterations)
    fit_cfg = _build_fit(cfg)
    ctrl_cfg = _build_control(cfg)
    candidates = _build_candidates(cfg, seed)
    if len(candidates) != 2:
        raise ConfigurationError(
            f"discriminate needs exactly two candidates, config has {len(candidates)}")
    endpoint = _resolve_endpoint(cfg, args)
    reference, closer = _open_reference(cfg, grid, endpoint)

    out_dir = Path(args.out) if args.out is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    writer = _RunWriter(out_dir)
    try:
        report = run_discrimination(reference, candidates, thresholds, fit_cfg,
                                    ctrl_cfg, seed, on_iteration=writer.on_iteration)
    finally:
        writer.close()
        closer()

    payload = {
        "tool": {"name": "opsinloop", "version": __version__},
        "config": _config_echo(cfg, seed, thresholds, fit_cfg, ctrl_cfg, grid, endpoint),
        "report": report_to_dict(report, writer.control_paths),
    }
    if out_dir is not None:
        _print_json(payload, out_dir / "report.json")
        print(f"verdict: {report.verdict.status.value}"
              + (f" winner={report.candidates[report.verdict.winner].kind.label}"
                 if report.verdict.winner is not None else ""))
    else:
        _print_json(payload, sys.stdout)
    return _verdict_exit_code(report)


def _cmd_tournament(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    grid = _build_grid(cfg)
    thresholds = _build_thresholds(cfg, args.iterations)
    fit_cfg = _build_fit(cfg)
    ctrl_cfg = _build_control(cfg)
    candidates = _build_candidates(cfg, seed)
    if len(candidates) < 2:
        raise ConfigurationError("a tournament needs at least two candidates")
    endpoint = _resolve_endpoint(cfg, args)
    reference, closer = _open_reference(cfg, grid, endpoint)
    try:
        result = tournament(reference, candidates, thresholds, fit_cfg, ctrl_cfg, seed)
    finally:
        closer()

    payload = {
        "tool": {"name": "opsinloop", "version": __version__},
        "config": _config_echo(cfg, seed, thresholds, fit_cfg, ctrl_cfg, grid, endpoint),
        "result": result.to_dict(),
    }
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _print_json(payload, out_dir / "tournament.json")
    else:
        _print_json(payload, sys.stdout)
    print(f"winner: {candidates[result.winner].kind.label}"
          + ("" if result.conclusive else " (inconclusive)"), file=sys.stderr)
    if any(m.report.truncated for m in result.matches):
        return EXIT_REFERENCE
    return EXIT_OK if result.conclusive else EXIT_INCONCLUSIVE


def _cmd_serve_reference(args) -> int:
    cfg = _load_config(args.config)
    grid = _build_grid(cfg)
    reference = _build_simulated_reference(cfg, grid)
    server = ReferenceServer(reference, args.host, args.port, record_path=args.record)
    host, port = server.bind()
    print(f"serving reference on {host}:{port}", flush=True)
    try:
        server.run_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def _cmd_replay(args) -> int:
    record_path = Path(args.record)
    if not record_path.exists():
        raise ConfigurationError(f"recording {args.record!r} does not exist")
    out_dir = Path(args.out) if args.out is not None else record_path.with_suffix("")
    out_dir.mkdir(parents=True, exist_ok=True)

    hello = None
    exchanges = []
    with open(record_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(
                    f"recording line {line_no} is not valid JSON: {exc}") from None
            if payload.get("type") == "hello":
                hello = payload
            elif payload.get("type") == "exchange":
                exchanges.append(payload)
            else:
                raise ConfigurationError(
                    f"recording line {line_no} has unknown type {payload.get('type')!r}")
    if hello is None:
        raise ConfigurationError("recording is missing its hello line")

    grid = TimeGrid(float(hello["dt"]), int(hello["n_steps"]))
    u_hi = float(hello["u_hi"])
    t = grid.times()
    for exchange in exchanges:
        u = exchange["u"]
        z = exchange["z"]
        if len(u) != grid.n_points or len(z) != grid.n_points:
            raise ConfigurationError(
                f"exchange {exchange.get('request_id')} does not match the recorded grid")
        path = out_dir / f"exchange_{int(exchange['request_id']):04d}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,u,y\n")
            for m in range(grid.n_points):
                fh.write(f"{float(t[m])!r},{float(u[m])!r},{float(z[m])!r}\n")
    summary = {
        "dt": grid.dt,
        "n_steps": grid.n_steps,
        "u_hi": u_hi,
        "repeats": int(hello["repeats"]),
        "n_exchanges": len(exchanges),
        "request_ids": [int(e["request_id"]) for e in exchanges],
    }
    _print_json(summary, out_dir / "summary.json")
    print(f"replayed {len(exchanges)} exchanges into {out_dir}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the experiment seed")
    common.add_argument("--out", default=None,
                        help="output file or directory (default: stdout)")
    common.add_argument("--config", default=None, help="TOML experiment file")
    common.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="opsinloop",
        description="Closed-loop discrimination between opsin photocurrent models.")
    parser.add_argument("--version", action="version",
                        version=f"opsinloop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="integrate one model under a canned stimulus")
    p.add_argument("--model", required=True, choices=["three", "four", "six"])
    p.add_argument("--theta", default="table",
                   help='"table", "random", or comma-separated values')
    p.add_argument("--control", default="box", choices=["box", "constant", "random"])
    p.add_argument("--amplitude", type=float, default=5.0)
    p.add_argument("--t-on", type=float, default=0.0)
    p.add_argument("--t-off", type=float, default=None)
    p.add_argument("--segments", type=int, default=8)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--paths", type=int, default=1)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fit", parents=[common],
                       help="fit one model to a recorded trajectory CSV")
    p.add_argument("--model", required=True, choices=["three", "four", "six"])
    p.add_argument("--theta", default="random")
    p.add_argument("--data", required=True, help="CSV file with columns t,u,y")
    p.add_argument("--n-grad", type=int, default=300)
    p.add_argument("--history", default="latest_only",
                   choices=["latest_only", "full_history"])
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("design-control", parents=[common],
                       help="design a stimulus separating two fixed models")
    p.add_argument("--model1", required=True, choices=["three", "four", "six"])
    p.add_argument("--theta1", default="table")
    p.add_argument("--model2", required=True, choices=["three", "four", "six"])
    p.add_argument("--theta2", default="table")
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=1000)
    p.set_defaults(handler=_cmd_design_control)

    p = sub.add_parser("discriminate", parents=[common],
                       help="run the closed loop for a two-candidate config")
    p.add_argument("--iterations", type=int, default=None,
                   help="override the iteration budget")
    p.add_argument("--endpoint", default=None,
                   help="host:port of a remote reference (overrides config and "
                        f"the {ENDPOINT_ENV_VAR} variable)")
    p.set_defaults(handler=_cmd_discriminate)

    p = sub.add_parser("tournament", parents=[common],
                       help="winner-stays discrimination over several candidates")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--endpoint", default=None)
    p.set_defaults(handler=_cmd_tournament)

    p = sub.add_parser("serve-reference", parents=[common],
                       help="serve the configured simulated reference over TCP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--record", default=None,
                   help="append every exchange to this JSONL session log")
    p.set_defaults(handler=_cmd_serve_reference)

    p = sub.add_parser("replay", parents=[common],
                       help="export a recorded session to per-exchange CSV files")
    p.add_argument("--record", required=True, help="session log written by --record")
    p.set_defaults(handler=_cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(message)s", stream=sys.stderr)
    try:
        if getattr(args, "config", None) is None and args.command in (
                "discriminate", "tournament", "serve-reference"):
            raise ConfigurationError(f"{args.command} needs --config")
        return int(args.handler(args))
    except (ConfigurationError, ContractError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except tomllib.TOMLDecodeError as exc:
        print(f"error: malformed TOML: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReferenceFailure as exc:
        print(f"reference failure: {exc}", file=sys.stderr)
        return EXIT_REFERENCE


if __name__ == "__main__":
    raise SystemExit(main())
