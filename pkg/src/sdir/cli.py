"""Command-line interface.

Exit codes: 0 success (divergent verdicts included), 1 usage, 2 I/O,
3 validation, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

import sdir
from sdir import bounds, dynamics, model as model_mod, optimize, spectral

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4

ENV_OUTPUT_DIR = "SDIR_OUTPUT_DIR"
ENV_THREADS = "SDIR_THREADS"

METHODS = ("greedy-upper", "greedy-lower", "greedy-sigma", "sandwich", "brute-force", "random")


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(f"{self.prog}: error: {message}", EXIT_USAGE)


@dataclass
class ExperimentConfig:
    command: str
    model_path: str | None = None
    generator: dict | None = None
    generator_seed: int = 0
    candidates_path: str | None = None
    delete_path: str | None = None
    delete_all: bool = False
    k: int | None = None
    method: str | None = None
    heuristic: str = "random"
    mode: str = "mean-field"
    tol: float = dynamics.DEFAULT_TOL
    max_iter: int = dynamics.DEFAULT_MAX_ITER
    trials: int = 1000
    horizon: int = 10_000
    seed: int = 0
    lazy: bool = True
    audit: bool = False
    refine_q: bool = False
    timing: bool = False
    threads: int = 1
    output: str | None = None
    output_dir: str | None = None
    extra: dict = field(default_factory=dict)

    def public(self) -> dict:
        """Config as embedded in outputs; output locations are left out."""
        doc = asdict(self)
        for key in ("output", "output_dir", "threads", "timing"):
            doc.pop(key)
        return doc


def _add_model_source(p, required=True):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--model", dest="model_path", metavar="FILE", help="model JSON document")
    src.add_argument("--generator", metavar="SPEC",
                     help="generator spec as a JSON file or inline JSON object")
    p.add_argument("--generator-seed", type=int, default=0, help="seed for --generator (default 0)")


def _add_output(p):
    p.add_argument("--output", metavar="FILE", help="write the main artifact here instead of stdout")
    p.add_argument("--output-dir", metavar="DIR", default=os.environ.get(ENV_OUTPUT_DIR),
                   help=f"write all artifacts into DIR (default ${ENV_OUTPUT_DIR})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdir", description="SDIR diffusion model toolkit")
    parser.add_argument("--version", action="version", version=f"sdir {sdir.__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a synthetic network model")
    g.add_argument("--spec", dest="generator", metavar="SPEC", help="generator spec (file or inline JSON)")
    g.add_argument("--topology", choices=model_mod.TOPOLOGIES)
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--direction", choices=("outward", "inward"))
    g.add_argument("--seeds", type=int, help="number of initially infected nodes")
    g.add_argument("--seed", type=int, default=0)
    _add_output(g)

    s = sub.add_parser("simulate", help="run mean-field or Monte Carlo dynamics")
    _add_model_source(s)
    s.add_argument("--mode", choices=("mean-field", "monte-carlo"), default="mean-field")
    s.add_argument("--tol", type=float, default=dynamics.DEFAULT_TOL)
    s.add_argument("--max-iter", type=int, default=dynamics.DEFAULT_MAX_ITER)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--horizon", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=int(os.environ.get(ENV_THREADS, "1")))
    _add_output(s)

    sp = sub.add_parser("spectral", help="spectral radii and convergence verdict")
    _add_model_source(sp)
    sp.add_argument("--refine-q", action="store_true", help="search q beyond the closed-form choice")
    _add_output(sp)

    b = sub.add_parser("bounds", help="lower bound, mean-field value and upper bound for a deletion set")
    _add_model_source(b)
    grp = b.add_mutually_exclusive_group()
    grp.add_argument("--delete", dest="delete_path", metavar="FILE", help="edge-set JSON file")
    grp.add_argument("--delete-all", action="store_true", help="delete every edge")
    _add_output(b)

    m = sub.add_parser("minimize", help="choose k edges to delete")
    _add_model_source(m)
    m.add_argument("--method", choices=METHODS, default="sandwich")
    m.add_argument("--k", type=int, required=True)
    m.add_argument("--candidates", dest="candidates_path", metavar="FILE",
                   help="candidate edge-set file (default: all edges)")
    m.add_argument("--heuristic", choices=optimize.HEURISTICS, default="random")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--no-lazy", dest="lazy", action="store_false")
    m.add_argument("--audit", action="store_true",
                   help="for sandwich, also run brute force and report the guarantee check")
    m.add_argument("--timing", action="store_true", help="include wall-clock time (breaks byte-identity)")
    _add_output(m)
    return parser


def _check_readable(path, what):
    if path is None:
        return
    if not os.path.isfile(path) or not os.access(path, os.R_OK):
        raise CLIError(f"cannot read {what} file {path!r}", EXIT_IO)


def _load_generator(text) -> dict:
    if text is None:
        return None
    if os.path.isfile(text):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    elif not text.lstrip().startswith("{"):
        raise CLIError(f"cannot read generator spec file {text!r}", EXIT_IO)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CLIError(f"malformed generator spec: {exc}", EXIT_IO) from exc
    if not isinstance(doc, dict):
        raise CLIError("generator spec must be a JSON object", EXIT_IO)
    return doc


def parse_cli(argv) -> ExperimentConfig:
    """Resolve ``argv`` into a validated :class:`ExperimentConfig`.

    Raises :class:`CLIError` carrying the exit code.  ``--help`` and
    ``--version`` raise :class:`SystemExit` with code 0.
    """
    argv = list(argv)
    if not argv:
        raise CLIError("no command given; try --help", EXIT_USAGE)
    ns = build_parser().parse_args(argv)
    args = vars(ns)
    cfg = ExperimentConfig(command=args.pop("command"))
    generator = _load_generator(args.pop("generator", None))
    if cfg.command == "generate":
        generator = dict(generator or {})
        for key in ("topology", "n", "p", "direction", "seeds"):
            value = args.pop(key)
            if value is not None:
                generator[key] = value
        cfg.generator_seed = args.pop("seed")
    cfg.generator = generator
    for key, value in args.items():
        if hasattr(cfg, key):
            setattr(cfg, key, value)

    _check_readable(cfg.model_path, "model")
    _check_readable(cfg.candidates_path, "candidate edge-set")
    _check_readable(cfg.delete_path, "edge-set")
    if cfg.tol <= 0:
        raise CLIError("--tol must be positive", EXIT_USAGE)
    if cfg.k is not None and cfg.k < 0:
        raise CLIError("--k must be nonnegative", EXIT_USAGE)
    if cfg.trials < 1 or cfg.horizon < 0 or cfg.max_iter < 1 or cfg.threads < 1:
        raise CLIError("--trials, --max-iter and --threads must be positive; --horizon nonnegative", EXIT_USAGE)
    return cfg


# ---------------------------------------------------------------------------
# execution


def _resolve_model(cfg: ExperimentConfig):
    if cfg.model_path is not None:
        model = model_mod.load_model(cfg.model_path)
        with open(cfg.model_path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        return model, {"path": cfg.model_path, "sha256": digest}
    try:
        spec = model_mod.GeneratorSpec.from_dict(cfg.generator)
    except TypeError as exc:
        raise CLIError(f"bad generator spec: {exc}", EXIT_USAGE) from exc
    try:
        model = model_mod.generate_network(spec, cfg.generator_seed)
    except ValueError as exc:
        if isinstance(exc, model_mod.ModelError):
            raise
        raise CLIError(f"infeasible generator spec: {exc}", EXIT_VALIDATION) from exc
    return model, {"generator": spec.to_dict(), "seed": cfg.generator_seed}


def _envelope(cfg, source, result) -> dict:
    return {
        "command": cfg.command,
        "version": sdir.__version__,
        "config": cfg.public(),
        "model_source": source,
        "result": result,
    }


def _dump(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=False, allow_nan=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Writer:
    def __init__(self, cfg, stdout):
        self.cfg = cfg
        self.stdout = stdout
        self.written = []
        if cfg.output_dir:
            Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)

    def main(self, text, default_name):
        if self.cfg.output:
            self._write(Path(self.cfg.output), text)
        elif self.cfg.output_dir:
            self._write(Path(self.cfg.output_dir) / default_name, text)
        else:
            self.stdout.write(text)

    def side(self, text, name):
        if self.cfg.output_dir:
            self._write(Path(self.cfg.output_dir) / name, text)

    def _write(self, path, text):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.written.append(str(path))


def _inf_note(value, reason):
    return {} if math.isfinite(value) else {"reason": reason}


def _cmd_generate(cfg, out):
    model, source = _resolve_model(cfg)
    out.main(model_mod.emit_model_document(model), "model.json")


def _cmd_simulate(cfg, out):
    model, source = _resolve_model(cfg)
    if cfg.mode == "mean-field":
        traj = dynamics.run_mean_field(model, tol=cfg.tol, max_iter=cfg.max_iter)
        summary = {
            "mode": "mean-field",
            "converged": traj.converged,
            "diverged": traj.diverged,
            "iterations": traj.iterations,
            "rho_BLOCK": traj.rho_block,
            "sigma": traj.sigma,
            "m_star": traj.m_star,
        }
        if traj.diverged:
            summary["note"] = "block operator radius >= 1; infection amount unbounded"
        out.main(traj.to_csv(), "trajectory.csv")
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mc = dynamics.monte_carlo_infection(model, cfg.trials, cfg.horizon, cfg.seed, workers=cfg.threads)
        summary = {"mode": "monte-carlo", **mc.summary()}
        out.main(mc.to_csv(), "monte_carlo.csv")
    out.side(_dump(_envelope(cfg, source, summary)), "simulate.json")


def _cmd_spectral(cfg, out):
    model, source = _resolve_model(cfg)
    q = spectral.select_q(model, refine=cfg.refine_q)
    report = spectral.analyze(model, q=q)
    result = report.to_dict()
    result["criterion"] = "rho(M(q)) < 1 implies x(t), y(t) -> 0"
    out.main(_dump(_envelope(cfg, source, result)), "spectral.json")


def _cmd_bounds(cfg, out):
    model, source = _resolve_model(cfg)
    if cfg.delete_all:
        P = model.edges
    elif cfg.delete_path:
        P = model_mod.load_edge_set(cfg.delete_path)
    else:
        P = ()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dynamics.DivergenceWarning)
        lower = bounds.sigma_lower(model, P)
        sigma = dynamics.estimated_infection(model, P)
        upper = bounds.sigma_upper(model, P)
    notes = {}
    if not math.isfinite(lower):
        notes["sigma_lower"] = "rho(N_-P) >= 1; lower bound not applicable"
    if not math.isfinite(sigma):
        notes["sigma"] = "mean-field dynamics diverge on the reduced graph"
    if not math.isfinite(upper):
        notes["sigma_upper"] = "rho(M_-P) >= 1; upper bound not applicable"
    result = {
        "deleted": [list(e) for e in P],
        "sigma_lower": lower,
        "sigma": sigma,
        "sigma_upper": upper,
        "notes": notes,
    }
    out.main(_dump(_envelope(cfg, source, result)), "bounds.json")


def _cmd_minimize(cfg, out):
    model, source = _resolve_model(cfg)
    Q = model_mod.load_edge_set(cfg.candidates_path) if cfg.candidates_path else None
    Q = model_mod.candidate_edges(model, Q)
    if cfg.k > len(Q):
        raise CLIError(f"--k {cfg.k} exceeds the {len(Q)} candidate edges", EXIT_USAGE)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dynamics.DivergenceWarning)
        method = cfg.method
        if method.startswith("greedy-"):
            res = optimize.greedy(method.split("-", 1)[1], model, Q, cfg.k, lazy=cfg.lazy)
        elif method == "sandwich":
            res = optimize.sandwich(model, Q, cfg.k, heuristic=cfg.heuristic, seed=cfg.seed, lazy=cfg.lazy)
        elif method == "brute-force":
            res = optimize.brute_force(model, Q, cfg.k)
        else:
            res = optimize.random_baseline(model, Q, cfg.k, seed=cfg.seed)
        result = res.to_dict(timing=cfg.timing)
        if method == "sandwich":
            q = spectral.select_q(model)
            su0 = bounds.sigma_upper(model, (), q)
            PL = res.candidates["P_L"]
            sl = bounds.sigma_lower(model, PL["chosen"])
            audit = {
                "sigma_upper_empty": su0,
                "sigma_lower_of_P_L": sl,
                "lower_ratio": optimize._ratio(su0 - PL["sigma"], su0 - sl),
            }
            if cfg.audit:
                best = optimize.brute_force(model, Q, cfg.k)
                audit = optimize.sandwich_audit(model, res, best, q=q).to_dict()
                audit["optimal"] = [list(e) for e in best.chosen]
            result["audit"] = audit
    out.main(_dump(_envelope(cfg, source, result)), "minimize.json")


COMMANDS = {
    "generate": _cmd_generate,
    "simulate": _cmd_simulate,
    "spectral": _cmd_spectral,
    "bounds": _cmd_bounds,
    "minimize": _cmd_minimize,
}


def execute_command(cfg: ExperimentConfig, stdout=None) -> int:
    """Run ``cfg`` and return the exit status; errors are reported on stderr."""
    out = _Writer(cfg, stdout or sys.stdout)
    try:
        COMMANDS[cfg.command](cfg, out)
    except CLIError:
        raise
    except model_mod.ValidationError as exc:
        raise CLIError(str(exc), EXIT_VALIDATION) from exc
    except (model_mod.DimensionError, model_mod.EdgeError) as exc:
        raise CLIError(str(exc), EXIT_VALIDATION) from exc
    except model_mod.DocumentError as exc:
        raise CLIError(str(exc), EXIT_IO) from exc
    except optimize.EnumerationCapError as exc:
        raise CLIError(str(exc), EXIT_USAGE) from exc
    except OSError as exc:
        raise CLIError(str(exc), EXIT_IO) from exc
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        raise CLIError(f"numeric failure: {exc}", EXIT_NUMERIC) from exc
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_VALIDATION) from exc
    return EXIT_OK


def main(argv=None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        cfg = parse_cli(sys.argv[1:] if argv is None else argv)
        return execute_command(cfg, stdout)
    except CLIError as exc:
        print(str(exc), file=stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
