"""Command-line front door: ``igame <command> [--flags]``.

Every command reads its inputs from, and writes its outputs to, one run
directory (``--out``).  Parameters come from built-in defaults, then an
optional JSON ``--config`` file, then command-line flags.  Each command
writes ``<command>_report.json``, which validates against the bundled report
schema.  Exit codes: 0 success, 1 pipeline failure, 2 configuration or
parse failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from importlib import resources
from typing import NamedTuple

import jsonschema
import numpy as np

from . import io as gio
from .coupling import additive
from .detection import (Candidate, SelectionConfig, detect_hidden_inputs, fit_dynamics,
                        select_interactive_model)
from .dynamics import ControlSignal, DynamicsModel, Expansion, linear_terms
from .epsilon import (EpsilonRepresentation, extract_desires, fit_desire_map, recover_epsilon,
                      unravel_recursive)
from .errors import BadConfig, IGameError
from .filters import FiltrationSpec, apply_filtration, identity_filtration
from .goals import tracking_goal
from .plotting import Series, emit_plot_data
from .quantum import (FilterBasis, FockSpace, HamiltonianSpec, build_hamiltonian, evolve_slow,
                      number_operators, quick_time_coefficients)
from .scenarios import Scenario, builtin_catalog, generate, get_scenario
from .sdpair import PictureModel, SDPair, add_agent, desire_controls, sd_consistency, sd_transform
from .serialize import read_json, to_json, write_json
from .verbalization import (SegmentFunctionalSpec, check_synlinguism, compute_words,
                            fit_recursion, segment_state_features, segment_trajectory)

log = logging.getLogger("igame")

COMMANDS = ("simulate", "detect", "unravel", "sdcheck", "verbalize", "quantize")
LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class Opt(NamedTuple):
    name: str
    kind: str  # int, float, str, path, bool or json
    default: object
    help: str = ""


_SELECT = [
    Opt("ridge", "float", 0.0, "ridge penalty of the dictionary regressions"),
    Opt("sparsify_threshold", "float", 1e-3, "hard-threshold for dictionary coefficients"),
    Opt("holdout_fraction", "float", 0.5, "trailing fraction held out for prediction"),
    Opt("threshold", "float", None, "hidden-input threshold (default: calibrated)"),
    Opt("n_perturbations", "int", 32, "perturbations of the optimality score"),
    Opt("perturbation_scale", "float", 0.1, "amplitude of the perturbations"),
    Opt("singular_tolerance", "float", 1e-10, "smallest admissible singular value of B"),
    Opt("force_rank", "bool", False, "report the ranking even for an autonomous verdict"),
]

OPTIONS = {
    "simulate": [
        Opt("scenario", "str", None, "builtin scenario name or scenario JSON path"),
    ],
    "detect": [
        Opt("traj", "path", "traj.csv", "trajectory CSV"),
        Opt("menu", "path", "menu.json", "candidate menu JSON"),
        Opt("degree", "int", None, "dictionary degree (default: meta.json, else 3)"),
    ] + _SELECT,
    "unravel": [
        Opt("traj", "path", "traj.csv", "trajectory CSV"),
        Opt("candidate", "path", "best_candidate.json", "selected candidate JSON"),
        Opt("desires", "json", None, "list of desire filtration objects"),
        Opt("desire_degree", "int", 1, "degree of the desire-map dictionary"),
        Opt("depth", "int", 1, "number of recursive levels (0 disables recursion)"),
        Opt("level_menus", "path", None, "JSON menu (or list of menus) for recursive levels"),
        Opt("level_degree", "int", 1, "dictionary degree at recursive levels"),
    ] + _SELECT,
    "sdcheck": [
        Opt("traj", "path", "traj.csv", "trajectory CSV"),
        Opt("model", "path", "controlled_model.json", "subject-picture dynamics JSON"),
        Opt("candidate", "path", "best_candidate.json", "selected candidate JSON"),
        Opt("eps", "path", "eps.csv", "recovered epsilon CSV"),
        Opt("u0", "path", "u0.csv", "pure controls CSV"),
        Opt("desires_spec", "path", "desires_spec.json", "desire filtrations JSON"),
        Opt("map_degree", "int", 1, "degree of the dual hidden-parameter map"),
        Opt("add_agent", "json", None, "expansion JSON of an added agent, or \"random\""),
        Opt("n_probes", "int", 100, "random probes of the add-agent check"),
        Opt("probe_scale", "float", 1.0, "scale of the random probes"),
    ],
    "verbalize": [
        Opt("traj", "path", "traj.csv", "trajectory CSV"),
        Opt("eps", "path", "eps.csv", "recovered epsilon CSV"),
        Opt("u0", "path", "u0.csv", "pure controls CSV"),
        Opt("v", "path", "v.csv", "desire-picture controls CSV"),
        Opt("sdpair", "path", "sdpair.json", "SD-pair JSON"),
        Opt("driver", "str", "eps", "segmentation driver: eps, phi or u0"),
        Opt("penalty", "float", None, "penalty per breakpoint (default: log(n) * variance)"),
        Opt("min_len", "int", 10, "minimum segment length in steps"),
        Opt("words", "json", None, "word spec object"),
        Opt("tactics", "json", None, "tactic spec object"),
        Opt("tolerance", "float", 1e-9, "synlinguism tolerance"),
        Opt("recursion_tolerance", "float", 1e-9, "verbalizability tolerance"),
    ],
    "quantize": [
        Opt("traj", "path", "traj.csv", "trajectory CSV"),
        Opt("eps", "path", "eps.csv", "recovered epsilon CSV"),
        Opt("hamiltonian", "json", None, "explicit Hamiltonian object (skips quick time)"),
        Opt("basis", "json", None, "list of filtration objects, one per mode"),
        Opt("cutoff", "int", 3, "maximal occupation per mode"),
        Opt("window", "int", 50, "quick-time window in nodes"),
        Opt("slow_steps", "int", 10, "number of slow-time steps"),
        Opt("slow_dt", "float", 0.1, "slow-time step"),
        Opt("vertex", "json", None, "cubic vertex: scalar or m x m x m list"),
        Opt("initial", "json", None, "initial occupation list"),
    ],
}

POSITIVE = {"sparsify_threshold", "threshold", "n_perturbations", "perturbation_scale",
            "singular_tolerance", "desire_degree", "level_degree", "degree", "map_degree",
            "n_probes", "probe_scale", "penalty", "min_len", "tolerance",
            "recursion_tolerance", "window", "slow_steps", "slow_dt"}
NON_NEGATIVE = {"ridge", "depth", "cutoff"}


# ---------------------------------------------------------------------------
# configuration


def _coerce(opt, value):
    if value is None:
        return None
    try:
        if opt.kind == "int":
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if opt.kind == "float":
            if isinstance(value, bool):
                raise ValueError
            v = float(value)
            if not math.isfinite(v):
                raise ValueError
            return v
        if opt.kind == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if opt.kind in ("str", "path"):
            if not isinstance(value, str):
                raise ValueError
            return value
        return value
    except (TypeError, ValueError):
        raise BadConfig(f"option {opt.name!r} expects a {opt.kind}, got {value!r}") from None


def _json_flag(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(command, args):
    """Merge defaults, the ``--config`` file and explicit flags."""
    opts = {o.name: o for o in OPTIONS[command]}
    cfg = {o.name: o.default for o in OPTIONS[command]}
    seed = 0
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise BadConfig(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise BadConfig(f"config {args.config} is not valid JSON: {exc}",
                            row=exc.lineno) from exc
        if not isinstance(data, dict):
            raise BadConfig("config must be a JSON object")
        unknown = sorted(set(data) - set(opts) - {"seed"})
        if unknown:
            raise BadConfig(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        if "seed" in data:
            seed = _coerce(Opt("seed", "int", 0), data["seed"])
        for k, v in data.items():
            if k != "seed":
                cfg[k] = _coerce(opts[k], v)
    for name, opt in opts.items():
        val = getattr(args, name, None)
        if val is not None:
            cfg[name] = _coerce(opt, _json_flag(val) if opt.kind == "json" else val)
    if args.seed is not None:
        seed = args.seed
    if seed < 0:
        raise BadConfig("seed must be non-negative")
    explicit = set(data) if args.config is not None else set()
    explicit |= {n for n in opts if getattr(args, n, None) is not None}
    for k, v in cfg.items():
        if v is None or opts[k].kind not in ("int", "float"):
            continue
        if k in POSITIVE and not v > 0:
            raise BadConfig(f"option {k!r} must be positive, got {v}")
        if k in NON_NEGATIVE and v < 0:
            raise BadConfig(f"option {k!r} must be non-negative, got {v}")
    if cfg.get("holdout_fraction") is not None and not 0 < cfg["holdout_fraction"] < 1:
        raise BadConfig("holdout_fraction must lie in (0, 1)")
    return cfg, int(seed), explicit


# ---------------------------------------------------------------------------
# run directory


class Run:
    """Run directory, report under construction and the artifact manifest."""

    def __init__(self, command, out, cfg, seed, explicit=()):
        self.command = command
        self.explicit = set(explicit)
        self.out = out
        self.cfg = cfg
        self.seed = seed
        self.results = {}
        self.report = {"command": command, "seed": seed, "config": {}, "results": self.results,
                       "artifacts": []}
        self.t_start = time.perf_counter()
        self.timings = {}

    def path(self, key):
        """Input path of option ``key``: relative paths resolve inside the run dir
        when given as defaults, and against the working directory otherwise."""
        p = self.cfg[key]
        if p is None:
            return None
        return p if os.path.isabs(p) or key in self.explicit else os.path.join(self.out, p)

    def require(self, key):
        p = self.path(key)
        if p is None or not os.path.exists(p):
            raise BadConfig(f"missing input {key!r}: {p} does not exist")
        return p

    def _target(self, name):
        os.makedirs(os.path.dirname(os.path.join(self.out, name)) or self.out, exist_ok=True)
        self.report["artifacts"].append(name)
        return os.path.join(self.out, name)

    def write_json(self, name, payload):
        write_json(self._target(name), payload)

    def write(self, name, writer, *args):
        writer(self._target(name), *args)

    def lap(self, label):
        self.timings[label] = time.perf_counter() - self.t_start

    def finish(self, with_timings):
        echo = {}
        for o in OPTIONS[self.command]:
            v = self.cfg[o.name]
            if o.kind == "path" and v is not None:
                v = _echo_path(self.path(o.name), self.out)
            echo[o.name] = v
        self.report["config"] = echo
        self.report["artifacts"] = sorted(set(self.report["artifacts"]))
        if with_timings:
            self.lap("total")
            self.report["timings"] = {k: float(v) for k, v in self.timings.items()}
        report = _clean(self.report)
        jsonschema.validate(report, report_schema())
        os.makedirs(self.out, exist_ok=True)
        write_json(os.path.join(self.out, f"{self.command}_report.json"), report)
        return report


def _echo_path(p, out):
    rel = os.path.relpath(os.path.abspath(p), os.path.abspath(out))
    return p if rel.startswith("..") else rel


def _clean(obj):
    """Plain JSON types only; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


_SCHEMA = None


def report_schema():
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("igame").joinpath("report.schema.json").read_text("utf-8")
        _SCHEMA = json.loads(text)
    return _SCHEMA


def _load_json(path, what):
    try:
        return read_json(path)
    except OSError as exc:
        raise BadConfig(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadConfig(f"{what} {path} is not valid JSON (line {exc.lineno})",
                        row=exc.lineno) from exc


def _parse(builder, payload, what):
    try:
        return builder(payload)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise BadConfig(f"malformed {what}: {exc}") from exc


def _load_menu(payload):
    items = payload["candidates"] if isinstance(payload, dict) else payload
    return [Candidate.from_json(c) for c in items]


def _load_object(value, what):
    """A JSON option may hold the object itself or a path to a JSON file."""
    if isinstance(value, str) and value not in ("random",):
        return _load_json(value, what)
    return value


def _signal(path, grid, role):
    sig = gio.read_signal(path, role)
    if sig.grid.n_steps != grid.n_steps or not np.isclose(sig.grid.dt, grid.dt, rtol=1e-9):
        raise BadConfig(f"{path} does not share the trajectory grid")
    return ControlSignal(grid, sig.values, role)


# ---------------------------------------------------------------------------
# commands


def _resolve_scenario(name):
    if name is None:
        raise BadConfig("simulate needs --scenario")
    if name.endswith(".json") or os.path.sep in name:
        return _parse(Scenario.from_json, _load_json(name, "scenario"), "scenario")
    try:
        return get_scenario(name)
    except KeyError:
        known = ", ".join(s.name for s in builtin_catalog())
        raise BadConfig(f"unknown scenario {name!r} (builtin: {known})") from None


def cmd_simulate(run):
    sc = _resolve_scenario(run.cfg["scenario"])
    game = generate(sc, run.seed)
    run.lap("generate")
    traj = game.trajectory
    run.write("traj.csv", gio.write_trajectory, traj)
    run.write("truth_u0.csv", gio.write_signal, game.u_pure, "u0")
    run.write("truth_eps.csv", gio.write_signal, game.epsilon.epsilon, "eps")
    run.write_json("scenario.json", sc.to_json())
    run.write_json("menu.json", [c.to_json() for c in sc.menu()])
    meta = {
        "scenario": sc.name,
        "seed": run.seed,
        "rng": "numpy default_rng (PCG64)",
        "fit_degree": sc.fit_degree,
        "events": [[float(t), float(a), int(c)] for t, a, c in game.events],
        "files": {"trajectory": "traj.csv", "pure_controls": "truth_u0.csv",
                  "epsilon": "truth_eps.csv", "scenario": "scenario.json", "menu": "menu.json"},
    }
    run.write_json("meta.json", meta)
    run.results.update({"scenario": sc.name, "n_nodes": traj.grid.n_nodes,
                        "state_dim": traj.state_dim, "control_dim": traj.control_dim,
                        "n_events": len(game.events)})
    emit_plot_data(run.report, [Series(f"state_{i + 1}", "t", f"phi_{i + 1}", traj.times,
                                       traj.states[:, i], f"{sc.name}: state {i + 1}")
                                for i in range(traj.state_dim)], run.out)
    print(f"simulated {sc.name}: {traj.grid.n_nodes} nodes, {len(game.events)} events")


def _selection_config(run, degree):
    c = run.cfg
    return SelectionConfig(degree=degree, ridge=c["ridge"],
                           sparsify_threshold=c["sparsify_threshold"],
                           holdout_fraction=c["holdout_fraction"],
                           n_perturbations=c["n_perturbations"],
                           perturbation_scale=c["perturbation_scale"], seed=run.seed,
                           singular_tolerance=c["singular_tolerance"], threshold=c["threshold"])


def cmd_detect(run):
    traj = gio.read_trajectory(run.require("traj"))
    menu = _parse(_load_menu, _load_json(run.require("menu"), "menu"), "menu")
    degree = run.cfg["degree"]
    meta_path = os.path.join(run.out, "meta.json")
    if degree is None:
        degree = 3
        if os.path.exists(meta_path):
            degree = int(_load_json(meta_path, "metadata").get("fit_degree", 3))
    run.cfg["degree"] = degree
    config = _selection_config(run, degree)
    model, fit_res = fit_dynamics(traj, None, False, config.ridge, config.sparsify_threshold,
                                  degree)
    verdict = detect_hidden_inputs(traj, model, config.threshold)
    run.lap("verdict")
    run.write_json("autonomous_model.json", to_json(model))
    run.results["autonomous_fit_residual"] = fit_res
    run.results["verdict"] = verdict.to_json()
    run.results["ranking"] = None
    if verdict.verdict == "hidden_inputs" or run.cfg["force_rank"]:
        if traj.controls is None:
            run.results["ranking_skipped"] = "no recorded controls"
        else:
            ranking = select_interactive_model(traj, menu, config=config)
            run.lap("ranking")
            run.write_json("controlled_model.json", to_json(ranking.model))
            run.write_json("best_candidate.json", menu[ranking.best_index].to_json())
            run.results["ranking"] = ranking.to_json()
            run.results["best_candidate"] = ranking.best.name
    emit_plot_data(run.report, [Series("residual_profile", "t", "residual", traj.times,
                                       verdict.per_node_residuals,
                                       "autonomous-model residual")], run.out)
    line = f"verdict: {verdict.verdict} (residual {verdict.residual_norm:.6g}, " \
           f"threshold {verdict.threshold_used:.6g})"
    if "best_candidate" in run.results:
        line += f"; best candidate: {run.results['best_candidate']}"
    print(line)


def _default_level_menu(m):
    zero = identity_filtration("phi", np.zeros((m, m)), name="passive")
    return [Candidate(zero, additive(m, [m]), tracking_goal(m, np.eye(m), name="rest"),
                      "level:passive")]


def _level_menus(run, m):
    path = run.path("level_menus")
    if path is not None:
        payload = _load_json(run.require("level_menus"), "level menus")
        nested = payload and isinstance(payload, list) and isinstance(payload[0], list)
        menus = payload if nested else [payload]
        return [_parse(_load_menu, mm, "level menu") for mm in menus]
    sc_path = os.path.join(run.out, "scenario.json")
    if os.path.exists(sc_path):
        level = _load_json(sc_path, "scenario").get("level_menu")
        if level:
            return [_parse(_load_menu, level, "level menu")]
    return [_default_level_menu(m)]


def _level_json(node, force_rank):
    d = node.to_json()
    out = []
    while node is not None:
        entry = {k: v for k, v in d.items() if k != "child"}
        if entry["verdict"]["verdict"] == "autonomous" and not force_rank:
            entry.pop("ranking")
        elif node.ranking is not None and node.ranking.best is not None:
            entry["best_candidate"] = node.ranking.best.name
        out.append(entry)
        node, d = node.child, d["child"]
    return out


def _desire_specs(value, eps_dim):
    if value is None:
        return [identity_filtration("eps", name="desire")]
    if not isinstance(value, list) or not value:
        raise BadConfig("desires must be a non-empty list of filtration objects")
    return [_parse(FiltrationSpec.from_json, d, "desire filtration") for d in value]


def cmd_unravel(run):
    traj = gio.read_trajectory(run.require("traj"))
    cand = _parse(Candidate.from_json, _load_json(run.require("candidate"), "candidate"),
                  "candidate")
    specs = _desire_specs(_load_object(run.cfg["desires"], "desires"), cand.coupling.eps_dim)
    menus = _level_menus(run, cand.coupling.eps_dim) if run.cfg["depth"] > 0 else None
    if traj.controls is None:
        raise BadConfig("unraveling needs a trajectory with recorded controls")
    u0 = apply_filtration(cand.filtration, {"u": ControlSignal(traj.grid, traj.controls),
                                            "phi": traj})
    rep = recover_epsilon(cand.coupling, traj.controls, u0.values, traj,
                          run.cfg["singular_tolerance"])
    desires = extract_desires(specs, rep, traj)
    dmap = fit_desire_map(desires, traj, rep, degree=run.cfg["desire_degree"])
    run.lap("epsilon")
    v0 = np.hstack([d.values for d in desires])
    run.write("eps.csv", gio.write_signal, rep.epsilon, "eps")
    run.write("u0.csv", gio.write_signal, ControlSignal(traj.grid, u0.values, "pure"), "u0")
    run.write("desires.csv", gio.write_signal, ControlSignal(traj.grid, v0, "desire"), "v0")
    run.write_json("desire_map.json", dmap.to_json())
    run.write_json("desires_spec.json", [s.to_json() for s in specs])
    run.results.update({"candidate": cand.name, "recovery_residual": rep.recovery_residual,
                        "desire_map_residual": dmap.residual,
                        "eps_max_abs": float(np.max(np.abs(rep.epsilon.values), initial=0.0)),
                        "levels": []})
    if menus is not None:
        config = _selection_config(run, run.cfg["level_degree"])
        root = unravel_recursive(traj, rep, menus, run.cfg["depth"], config)
        run.lap("levels")
        run.results["levels"] = _level_json(root, run.cfg["force_rank"])
        for node in root.levels():
            if node.epsilon is not None and node.verdict.verdict == "hidden_inputs":
                run.write(f"eps_level_{node.level}.csv", gio.write_signal,
                          node.epsilon.epsilon, "eps")
    emit_plot_data(run.report, [Series(f"eps_{j + 1}", "t", f"eps_{j + 1}", traj.times,
                                       rep.epsilon.values[:, j], f"recovered eps {j + 1}")
                                for j in range(rep.epsilon.dim)], run.out)
    depth = [lv["verdict"]["verdict"] for lv in run.results["levels"]]
    print(f"epsilon recovered (residual {rep.recovery_residual:.3g}); "
          f"levels: {', '.join(depth) if depth else 'none'}")


def _random_agent(d, rng):
    k = d.couplings.eps_dim
    n_in = k + d.state_dim
    terms = linear_terms(n_in, constant=True)
    coef = rng.standard_normal((k, len(terms)))
    return Expansion(terms, coef, (("u0", k), ("phi", d.state_dim)))


def cmd_sdcheck(run):
    traj = gio.read_trajectory(run.require("traj"))
    model = _parse(lambda p: DynamicsModel(**_model_args(p)),
                   _load_json(run.require("model"), "model"), "model")
    cand = _parse(Candidate.from_json, _load_json(run.require("candidate"), "candidate"),
                  "candidate")
    specs = [_parse(FiltrationSpec.from_json, s, "desire filtration")
             for s in _load_json(run.require("desires_spec"), "desire specs")]
    eps = _signal(run.require("eps"), traj.grid, "epsilon")
    u0 = _signal(run.require("u0"), traj.grid, "pure")
    agent = _load_object(run.cfg["add_agent"], "agent term")
    if traj.controls is None:
        raise BadConfig("the SD check needs a trajectory with recorded controls")
    rep = EpsilonRepresentation(cand.coupling, eps, 0.0)
    s = PictureModel(model, cand.coupling, "subjects")
    d = sd_transform(s, specs, rep, traj, u0, degree=run.cfg["map_degree"])
    v = desire_controls(d, rep, traj, u0=u0.values)
    pair = SDPair(s, d)
    res = sd_consistency(pair, traj, traj.controls, v)
    run.lap("transform")
    per_node = np.linalg.norm(s.rhs(traj.states, traj.controls) - d.rhs(traj.states, v), axis=1)
    run.results.update({"consistency_residual": res,
                        "map_residual": d.hidden_parameter_map.residual,
                        "desire_dim": int(v.shape[1])})
    if agent is not None:
        rng = np.random.default_rng(run.seed)
        if agent == "random":
            term = _random_agent(d, rng)
        else:
            from .serialize import expansion_from_json
            term = _parse(expansion_from_json, agent, "agent term")
        d2 = add_agent(d, term)
        n, scale = run.cfg["n_probes"], run.cfg["probe_scale"]
        phi = scale * rng.standard_normal((n, d.state_dim))
        vv = scale * rng.standard_normal((n, d.dynamics.control_dim))
        change = float(np.max(np.abs(d.rhs(phi, vv) - d2.rhs(phi, vv)), initial=0.0))
        run.results["add_agent"] = {"n_probes": n, "max_rhs_change": change,
                                    "n_map_parts": len(d2.hidden_parameter_map.parts)}
        run.write_json("sdpair_extended.json", SDPair(s, d2, res).to_json())
    run.write_json("sdpair.json", pair.to_json())
    run.write("v.csv", gio.write_signal, ControlSignal(traj.grid, v, "interactive"), "v")
    emit_plot_data(run.report, [Series("consistency_profile", "t", "mismatch", traj.times,
                                       per_node, "S/D right-hand-side mismatch")], run.out)
    print(f"SD consistency residual: {res:.3g}")


def _model_args(p):
    if p.get("type") != "dynamics_model":
        raise ValueError("not a dynamics model")
    n_terms = len(p["terms"])
    return {"state_dim": p["state_dim"], "control_dim": p["control_dim"],
            "terms": [tuple(t) for t in p["terms"]],
            "coefficients": np.array(p["coefficients"], dtype=float).reshape(-1, n_terms)}


def _word_spec(value, default):
    if value is None:
        return SegmentFunctionalSpec(default)
    value = _load_object(value, "word spec")
    return _parse(SegmentFunctionalSpec.from_json, value, "word spec")


def cmd_verbalize(run):
    traj = gio.read_trajectory(run.require("traj"))
    eps = _signal(run.require("eps"), traj.grid, "epsilon")
    u0 = _signal(run.require("u0"), traj.grid, "pure")
    v = _signal(run.require("v"), traj.grid, "interactive")
    pair = _parse(SDPair.from_json, _load_json(run.require("sdpair"), "SD pair"), "SD pair")
    words_spec = _word_spec(run.cfg["words"], (("mean", "phi"),))
    tactic_spec = _word_spec(run.cfg["tactics"], (("mean", "u0"),))
    if run.cfg["driver"] not in ("eps", "phi", "u0"):
        raise BadConfig("driver must be one of eps, phi, u0")
    d = pair.d_picture
    rep = EpsilonRepresentation(d.couplings, eps, 0.0)
    v0 = np.hstack([x.values for x in extract_desires(d.desire_specs, rep, traj)])
    eps_dual = v.values - v0
    s_series = {"eps": eps.values, "phi": traj.states, "u0": u0.values}
    d_series = {"eps": eps_dual, "phi": traj.states, "u0": v0}
    driver = s_series[run.cfg["driver"]]
    penalty = run.cfg["penalty"]
    if penalty is None:
        spread = float(np.sum(np.var(driver, axis=0)))
        penalty = math.log(traj.grid.n_nodes) * max(spread, 1e-12)
    run.results["penalty"] = penalty
    part = segment_trajectory(traj, driver, penalty, run.cfg["min_len"])
    dt = traj.grid.dt
    w_s = compute_words(words_spec, part, s_series, dt, "S")
    w_d = compute_words(words_spec, part, d_series, dt, "D")
    syn = check_synlinguism(w_s, w_d, run.cfg["tolerance"])
    feats = segment_state_features(traj, part)
    t_s = compute_words(tactic_spec, part, s_series, dt, "S")
    t_d = compute_words(tactic_spec, part, d_series, dt, "D")
    rec_s = fit_recursion(w_s, t_s, feats, tolerance=run.cfg["recursion_tolerance"])
    rec_d = fit_recursion(w_d, t_d, feats, tolerance=run.cfg["recursion_tolerance"])
    run.lap("words")
    run.write_json("partition.json", part.to_json())
    run.write("words_S.csv", gio.write_words, w_s, part, traj.times)
    run.write("words_D.csv", gio.write_words, w_d, part, traj.times)
    run.write_json("recursion_S.json", rec_s.to_json())
    run.write_json("recursion_D.json", rec_d.to_json())
    run.results.update({
        "n_segments": part.n_segments,
        "synlinguism": {"flag": syn.flag, "first_mismatch": syn.first_mismatch,
                        "max_deviation": float(np.max(syn.deviations, initial=0.0))},
        "verbalizable": {"S": rec_s.verbalizable, "D": rec_d.verbalizable},
        "recursion_max_residual": {"S": rec_s.max_residual, "D": rec_d.max_residual},
    })
    emit_plot_data(run.report, [Series("segment_deviation", "segment", "deviation",
                                       np.arange(part.n_segments), syn.deviations,
                                       "S/D word deviation per segment")], run.out)
    if syn.flag:
        print(f"synlinguism: true over {part.n_segments} segments")
    else:
        print(f"synlinguism: false (first mismatch at segment {syn.first_mismatch} "
              f"of {part.n_segments})")


def _vertex(value, m):
    if value is None:
        return None
    try:
        g = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise BadConfig("vertex must be a number or an m x m x m list") from None
    if g.ndim == 0:
        g = np.full((m, m, m), float(g))
    if g.shape != (m, m, m):
        raise BadConfig(f"vertex must have shape {(m, m, m)}")
    return g


def _slow_specs(run):
    """One Hamiltonian per slow step, piecewise constant in slow time."""
    n_steps = run.cfg["slow_steps"]
    explicit = _load_object(run.cfg["hamiltonian"], "Hamiltonian")
    if explicit is not None:
        spec = _parse(HamiltonianSpec.from_json, explicit, "Hamiltonian")
        vertex = _vertex(run.cfg["vertex"], spec.n_modes)
        if vertex is not None:
            spec = HamiltonianSpec(spec.omega, vertex)
        return [spec] * n_steps, None
    traj = gio.read_trajectory(run.require("traj"))
    eps = _signal(run.require("eps"), traj.grid, "epsilon")
    m_eps = eps.dim
    if run.cfg["basis"] is None:
        specs = [identity_filtration("eps", np.eye(m_eps)[a:a + 1], name=f"mode_{a + 1}")
                 for a in range(m_eps)]
    else:
        basis_cfg = _load_object(run.cfg["basis"], "basis")
        if not isinstance(basis_cfg, list) or not basis_cfg:
            raise BadConfig("basis must be a non-empty list of filtration objects")
        specs = [_parse(FiltrationSpec.from_json, b, "basis filtration") for b in basis_cfg]
    basis = _parse(FilterBasis, tuple(specs), "filter basis")
    vertex = _vertex(run.cfg["vertex"], basis.n_modes)
    n = traj.grid.n_steps
    out = []
    for j in range(n_steps):
        stop = max(1, int(round((j + 1) * n / n_steps)))
        sub = traj.slice(0, stop)
        rep = EpsilonRepresentation(None, ControlSignal(sub.grid, eps.values[:stop + 1],
                                                        "epsilon"), 0.0)
        window = min(run.cfg["window"], sub.grid.n_nodes)
        spec = quick_time_coefficients(basis, rep, sub, window)
        out.append(spec if vertex is None else HamiltonianSpec(spec.omega, vertex))
    return out, window


def cmd_quantize(run):
    specs, window = _slow_specs(run)
    cutoff = run.cfg["cutoff"]
    m = specs[0].n_modes
    if cutoff == 0 and any(s.has_vertex for s in specs):
        raise BadConfig("cutoff 0 admits no cubic vertex (every ladder operator vanishes)")
    space = FockSpace(m, cutoff)
    initial = run.cfg["initial"]
    if initial is None:
        initial = [1 if (a == 0 and cutoff >= 1) else 0 for a in range(m)]
    try:
        state = space.basis_state(initial)
    except (TypeError, ValueError) as exc:
        raise BadConfig(f"bad initial occupation: {exc}") from exc
    numbers = number_operators(space)
    dt = run.cfg["slow_dt"]
    snapshots = [state]
    for spec in specs:
        H = build_hamiltonian(spec, space)
        state = evolve_slow(state, H, dt)
        snapshots.append(state)
    run.lap("evolve")
    slow_t = dt * np.arange(len(snapshots))
    occ = np.array([[s.expectation(N).real for N in numbers] for s in snapshots])
    norms = np.array([s.norm for s in snapshots])
    for j, s in enumerate(snapshots):
        run.write(f"fock/step_{j:04d}.csv", gio.write_fock_state, space, s.coefficients)
    run.write_json("hamiltonians.json", [s.to_json() for s in specs])
    run.results.update({
        "n_modes": m, "cutoff": cutoff, "dim": space.dim, "window": window,
        "slow_times": slow_t, "norm_trace": norms,
        "occupation_traces": occ.T, "total_occupation": occ.sum(axis=1),
        "max_norm_error": float(np.max(np.abs(norms - 1.0))),
    })
    series = [Series(f"occupation_mode_{a + 1}", "slow_t", f"n_{a + 1}", slow_t, occ[:, a],
                     f"occupation of mode {a + 1}") for a in range(m)]
    series.append(Series("norm_trace", "slow_t", "norm", slow_t, norms, "state norm"))
    emit_plot_data(run.report, series, run.out)
    print(f"evolved {len(specs)} slow steps in dimension {space.dim}; "
          f"max norm error {run.results['max_norm_error']:.3g}")


HANDLERS = {"simulate": cmd_simulate, "detect": cmd_detect, "unravel": cmd_unravel,
            "sdcheck": cmd_sdcheck, "verbalize": cmd_verbalize, "quantize": cmd_quantize}


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise BadConfig(message)


def build_parser():
    parser = _Parser(prog="igame", description="Interactive-game identification workbench.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__doc__)
        p.add_argument("--out", default="igame-run", help="run directory (default: igame-run)")
        p.add_argument("--seed", type=int, default=None, help="seed of all randomness")
        p.add_argument("--config", default=None, help="JSON file of command options")
        p.add_argument("--timings", action="store_true", help="record wall-clock timings")
        for o in OPTIONS[name]:
            flag = "--" + o.name.replace("_", "-")
            if o.kind == "bool":
                p.add_argument(flag, dest=o.name, action="store_true", default=None, help=o.help)
            else:
                typ = {"int": int, "float": float}.get(o.kind, str)
                p.add_argument(flag, dest=o.name, type=typ, default=None, help=o.help)
    return parser


def _setup_logging():
    level = os.environ.get("IGAME_LOG", "info").strip().lower()
    if level not in LOG_LEVELS:
        raise BadConfig(f"IGAME_LOG must be one of {', '.join(LOG_LEVELS)}, got {level!r}")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("igame")
    root.handlers[:] = [handler]
    root.setLevel(LOG_LEVELS[level])
    root.propagate = False


def main(argv=None):
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        cfg, seed, explicit = resolve_config(args.command, args)
        run = Run(args.command, args.out, cfg, seed, explicit)
        log.info("igame %s: out=%s seed=%d", args.command, args.out, seed)
        HANDLERS[args.command](run)
        run.finish(args.timings)
    except BadConfig as exc:
        where = f" (row {exc.row})" if exc.row is not None and "row" not in str(exc) else ""
        print(f"igame: configuration error: {exc}{where}", file=sys.stderr)
        return 2
    except IGameError as exc:
        print(f"igame: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("traceback", exc_info=True)
        print(f"igame: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def entry():
    sys.exit(main())
