"""Command-line driver: ``generate``, ``solve``, ``evaluate`` and ``compare``.

All commands read one JSON run configuration::

    {
      "network_path": "net.json",
      "scenarios": {"generate": {"ca_params": {...}, "n": 500, "seed": 0,
                                 "depth_limit": 2}}
                   | {"load": {"tree_path": "tree.json"}},
      "options": {"beta": 0.4, "restoration": true, "fairness_enabled": true},
      "engine": {"cut_family": "SMC", "z_domain": "binary", "epsilon": 0.01,
                 "delta": 1e-4, "max_iterations": 50, "max_wall_time": 600},
      "solver": {"mip_gap": 1e-9},
      "evaluation": {"test_tree_path": "test.json", "betas": [0, 0.4]},
      "output_dir": "out"
    }

Relative paths are resolved against the config file's directory.
Exit codes: 0 success, 2 configuration or input error, 3 infeasible plan,
4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .cuts import DualSolverParams
from .engine import EngineConfig, run
from .errors import (BackendError, ConfigError, EmptyInput, InfeasiblePlan, InvalidParams,
                     IoError, ParseError, UnknownBus, ValidationError)
from .evaluation import (NominalPlan, compare_restoration, emit_reports, evaluate_out_of_sample,
                         fairness_metrics)
from .formulation import FormulationOptions
from .network import load_network
from .scenarios import CaParams, build_tree, load_tree, save_tree, simulate_paths
from .solver import SolverParams

log = logging.getLogger("wildfire_psps")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_BACKEND = 0, 2, 3, 4


@dataclass
class RunConfig:
    network_path: Path
    tree_path: Path | None = None
    generate: dict | None = None
    options: dict = field(default_factory=dict)
    engine: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    threads: int = 1

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data, path.parent)

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        resolve = lambda p: p if Path(p).is_absolute() else base / p
        if "network_path" not in data:
            raise ConfigError("network_path is required")
        net_path = Path(resolve(data["network_path"]))
        if not net_path.exists():
            raise ConfigError(f"network file not found: {net_path}")
        src = data.get("scenarios", {})
        if not isinstance(src, dict) or len(src) != 1 or next(iter(src)) not in ("generate", "load"):
            raise ConfigError("scenarios needs exactly one of 'generate' or 'load'")
        tree_path = gen = None
        if "load" in src:
            tree_path = Path(resolve(src["load"]["tree_path"]))
            if not tree_path.exists():
                raise ConfigError(f"tree file not found: {tree_path}")
        else:
            gen = dict(src["generate"])
            if int(gen.get("n", 0)) < 1:
                raise ConfigError("generate.n must be >= 1")
        ev = dict(data.get("evaluation", {}))
        if ev.get("test_tree_path"):
            ev["test_tree_path"] = Path(resolve(ev["test_tree_path"]))
        return cls(net_path, tree_path, gen, dict(data.get("options", {})),
                   dict(data.get("engine", {})), dict(data.get("solver", {})), ev,
                   Path(resolve(data.get("output_dir", "out"))), int(data.get("threads", 1)))

    def formulation_options(self) -> FormulationOptions:
        beta = self.options.get("beta")
        try:
            return FormulationOptions(math.inf if beta is None else float(beta),
                                      bool(self.options.get("restoration", True)),
                                      bool(self.options.get("fairness_enabled", True)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def engine_config(self) -> EngineConfig:
        e = dict(self.engine)
        dual = DualSolverParams(**e.pop("dual", {})) if "dual" in self.engine else DualSolverParams()
        allowed = set(EngineConfig.__dataclass_fields__) - {"dual", "threads"}
        unknown = set(e) - allowed
        if unknown:
            raise ConfigError(f"unknown engine keys: {sorted(unknown)}")
        if "backward_gap" not in e and "mip_gap" in self.solver:
            e["backward_gap"] = float(self.solver["mip_gap"])
        try:
            return EngineConfig(dual=dual, threads=self.threads, **e)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def solver_params(self) -> SolverParams:
        return SolverParams(mip_gap=float(self.solver.get("mip_gap", 1e-9)),
                            time_limit=self.solver.get("time_limit"), threads=self.threads)


def _scenario_tree(cfg: RunConfig, net, seed_override=None):
    if cfg.tree_path is not None:
        return load_tree(cfg.tree_path, net.components)
    g = cfg.generate
    params = CaParams.from_dict(g.get("ca_params", {}))
    seed = int(g.get("seed", 0)) if seed_override is None else seed_override
    depth = int(g.get("depth_limit", 2))
    paths = simulate_paths(net, params, int(g["n"]), seed, depth)
    return build_tree(paths, net.horizon_T, depth)


def cmd_generate(cfg: RunConfig, net, args) -> int:
    if cfg.generate is None:
        raise ConfigError("generate needs a 'generate' scenario source")
    tree = _scenario_tree(cfg, net, args.seed)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    save_tree(tree, cfg.output_dir / "tree.json")
    (cfg.output_dir / "tree_stats.json").write_text(json.dumps(tree.stats(), indent=1,
                                                               sort_keys=True))
    print(f"wrote {cfg.output_dir / 'tree.json'}: {tree.stats()}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, net, args) -> int:
    tree = _scenario_tree(cfg, net, args.seed)
    options = cfg.formulation_options()
    econf = cfg.engine_config()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cut_log = out / "cuts.jsonl"
    cut_log.unlink(missing_ok=True)
    econf = EngineConfig(**{**econf.__dict__, "cut_log": str(cut_log)})
    rep = run(net, tree, options, econf,
              callback=lambda r: log.info("iter %d lb=%.6g ub=%.6g gap=%.3g cuts=%d",
                                          r.iteration, r.lb, r.ub, r.gap, r.cuts_added))
    plan = NominalPlan.from_solution(rep.incumbent[tree.root], options)
    plan.save(out / "plan.json")
    save_tree(tree, out / "tree.json")
    (out / "incumbent.json").write_text(json.dumps(
        {nid: s.to_dict() for nid, s in rep.incumbent.items()}))
    fm = fairness_metrics(plan, net)
    emit_reports(out, report=rep, fairness={options.beta: fm},
                 extra={"command": "solve", "n_tree_nodes": len(tree.nodes)})
    print(f"{rep.reason}: lb={rep.lb:.6f} ub={rep.ub:.6f} gap={rep.gap:.3e} "
          f"iterations={rep.iterations}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, net, args) -> int:
    plan_path = Path(args.plan) if args.plan else cfg.output_dir / "plan.json"
    if not plan_path.exists():
        raise ConfigError(f"plan file not found: {plan_path}")
    plan = NominalPlan.load(plan_path)
    test_path = args.test_tree or cfg.evaluation.get("test_tree_path")
    if test_path:
        test = load_tree(test_path, net.components)
    else:
        test = _scenario_tree(cfg, net, args.seed)
    b = evaluate_out_of_sample(plan, net, test, cfg.solver_params(), cfg.threads)
    emit_reports(cfg.output_dir, breakdowns={"plan": b},
                 extra={"command": "evaluate", "plan": str(plan_path)})
    print(f"nominal={b.nominal_shed_cost:.6f} disruptive={b.disruptive_shed_cost:.6f} "
          f"damage={b.damage_cost:.6f} total={b.total:.6f}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, net, args) -> int:
    if args.betas is not None:
        betas = [float(b) for b in args.betas.split(",") if b.strip()]
    else:
        betas = cfg.evaluation.get("betas", [cfg.formulation_options().beta])
    if not betas:
        raise ConfigError("beta list is empty")
    tree = _scenario_tree(cfg, net, args.seed)
    test_path = cfg.evaluation.get("test_tree_path")
    test = load_tree(test_path, net.components) if test_path else None
    method = cfg.evaluation.get("method", "decomposition")
    rows = compare_restoration(net, tree, betas, test, method, cfg.engine_config(),
                               params=cfg.solver_params(), threads=cfg.threads)
    emit_reports(cfg.output_dir, comparison=rows, extra={"command": "compare"})
    for r in rows:
        print(f"restoration={int(r.restoration)} beta={r.beta} total={r.total:.6f}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "evaluate": cmd_evaluate,
            "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wildfire-psps",
                                description="Multistage de-energization planning under wildfire risk")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--output", help="output directory (overrides config)")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--seed", type=int, help="scenario sampling seed (overrides config)")
    p.add_argument("--beta", type=float, help="fairness level (overrides config)")
    p.add_argument("--cut-family", choices=["BC", "SBC", "LC", "SMC"])
    p.add_argument("--epsilon", type=float, help="relative optimality gap")
    p.add_argument("--plan", help="plan JSON for 'evaluate'")
    p.add_argument("--test-tree", help="testing scenario tree for 'evaluate'")
    p.add_argument("--betas", help="comma-separated fairness levels for 'compare'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.output:
            cfg.output_dir = Path(args.output)
        if args.threads:
            cfg.threads = args.threads
        if args.beta is not None:
            cfg.options["beta"] = args.beta
        if args.cut_family:
            cfg.engine["cut_family"] = args.cut_family
        if args.epsilon is not None:
            cfg.engine["epsilon"] = args.epsilon
        net = load_network(cfg.network_path)
        return COMMANDS[args.command](cfg, net, args)
    except InfeasiblePlan as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BackendError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ConfigError, ParseError, ValidationError, InvalidParams, EmptyInput, UnknownBus,
            IoError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
