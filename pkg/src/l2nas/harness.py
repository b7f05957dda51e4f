"""Experiment orchestration: configs, per-seed runs, baselines, transfer, reports.

Each seed writes one JSONL log: a ``{"header": ...}`` line, one record per
search step, and a ``{"final": ...}`` line. Reports are computed from those
logs alone.
"""

from __future__ import annotations

import concurrent.futures
import copy
import json
import statistics
from pathlib import Path

import jsonschema
import numpy as np

from .agent import (
    Agent,
    AgentConfig,
    Exploration,
    SearchResult,
    TopKTracker,
    fine_tune,
    run_search,
    same_shape,
    save_checkpoint,
)
from .oracle import (
    ENUMERATION_CAP,
    ExternalOracle,
    RewardMode,
    SyntheticOracle,
    enumerate_top,
    load_tabular,
    mean_matrix,
)
from .space import (
    SearchSpaceSpec,
    builtin_space,
    iter_archs,
    parse_arch_key,
    random_arch,
)

PRESETS = {
    "nb": {
        "K": 64, "tau": 0.9, "batch_size": 8, "xi": 1e-4, "c_max": 10,
        "exploration": {"kind": "eps_greedy", "eps0": 1.0, "eps_min": 0.05, "anneal_end": 175},
        "hidden": 128, "actor_lr": 1e-8, "critic_lr": 1e-4, "buffer_capacity": None,
        "steps": 1000, "reward": {"kind": "simple"},
    },
    "large": {
        "K": 500, "tau": 0.95, "batch_size": 64, "xi": 5e-5, "c_max": 1,
        "exploration": {"kind": "warmup", "warmup_steps": 3000},
        "hidden": 256, "actor_lr": 1e-8, "critic_lr": 1e-4, "buffer_capacity": 5000,
        "steps": 20000, "reward": {"kind": "simple"},
    },
}

BUDGETS = (250, 500, 1000)

_number = {"type": "number"}
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["space", "oracle"],
    "properties": {
        "preset": {"enum": list(PRESETS)},
        "space": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["nb201", "darts", "ofa_mbv3", "synthetic"]},
                "E": {"type": "integer", "minimum": 1},
                "O": {"type": "integer", "minimum": 2},
            },
        },
        "oracle": {
            "oneOf": [
                {
                    "type": "object", "additionalProperties": False,
                    "required": ["kind", "seed"],
                    "properties": {
                        "kind": {"const": "synthetic"},
                        "seed": {"type": "integer", "minimum": 0},
                        "acc_env": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
                        "blend_seed": {"type": "integer", "minimum": 0},
                        "blend_weight": {"type": "number", "minimum": 0, "maximum": 1},
                        "bias": _number,
                    },
                },
                {
                    "type": "object", "additionalProperties": False,
                    "required": ["kind", "path"],
                    "properties": {"kind": {"const": "tabular"}, "path": {"type": "string"}},
                },
                {
                    "type": "object", "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "external"},
                        "command": {"type": ["string", "array"], "items": {"type": "string"}},
                        "host": {"type": "string"},
                        "port": {"type": "integer"},
                        "timeout": {"type": "number", "exclusiveMinimum": 0},
                        "acc_env": {"type": ["number", "null"]},
                    },
                },
            ]
        },
        "agent": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "tau": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "xi": {"type": "number", "minimum": 0},
                "c_max": {"type": "integer", "minimum": 1},
                "exploration": {
                    "type": "object", "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["eps_greedy", "warmup"]},
                        "eps0": _number, "eps_min": _number,
                        "anneal_end": {"type": "integer", "minimum": 1},
                        "warmup_steps": {"type": "integer", "minimum": 0},
                    },
                },
                "hidden": {"type": "integer", "minimum": 1},
                "actor_lr": {"type": "number", "minimum": 0},
                "critic_lr": {"type": "number", "minimum": 0},
                "buffer_capacity": {"type": ["integer", "null"], "minimum": 1},
                "steps": {"type": "integer", "minimum": 0},
                "reward": {
                    "type": "object", "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["simple", "rescaled"]},
                        "acc_env": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
                    },
                },
            },
        },
        "finetune": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "steps": {"type": "integer", "minimum": 0},
                "W": {"type": "integer", "minimum": 0},
            },
        },
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "out": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "reward":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(source, preset: str | None = None, seeds=None, steps=None, out=None) -> dict:
    """Read, validate and normalise a run config; CLI-style overrides win."""
    if isinstance(source, (str, Path)):
        try:
            raw = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {source}: {e}") from None
    else:
        raw = copy.deepcopy(source)
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {e.message}") from None
    preset = preset or raw.get("preset", "nb")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = dict(raw)
    cfg["preset"] = preset
    cfg["agent"] = _merge(PRESETS[preset], raw.get("agent", {}))
    if steps is not None:
        cfg["agent"]["steps"] = steps
    if seeds is not None:
        cfg["seeds"] = list(seeds)
    cfg.setdefault("seeds", [0])
    if out is not None:
        cfg["out"] = str(out)
    cfg.setdefault("out", "runs")
    cfg.setdefault("workers", 1)
    if cfg["space"]["name"] == "synthetic" and ("E" not in cfg["space"] or "O" not in cfg["space"]):
        raise ConfigError("synthetic space needs E and O")
    return cfg


def build_space(cfg: dict) -> SearchSpaceSpec:
    sp = cfg["space"]
    return builtin_space(sp["name"], sp.get("E"), sp.get("O"))


def build_oracle(cfg: dict, space: SearchSpaceSpec | None = None):
    space = space or build_space(cfg)
    oc = cfg["oracle"]
    if oc["kind"] == "synthetic":
        b = space.blocks[0]
        orc = SyntheticOracle.from_seed(oc["seed"], b.rows, b.cols, space=space, acc_env=oc.get("acc_env"))
        if "blend_seed" in oc or "bias" in oc:
            orc = SyntheticOracle(
                orc.landscape.blend(oc.get("blend_seed", oc["seed"]), oc.get("blend_weight", 0.0),
                                    oc.get("bias", 0.0)),
                space, acc_env=oc.get("acc_env"),
            )
        return orc
    if oc["kind"] == "tabular":
        orc = load_tabular(oc["path"])
        if not same_shape(orc.space, space):
            raise ConfigError(f"tabular file is for {orc.space.name}, config asks for {space.name}")
        orc.space = space
        return orc
    if "command" not in oc and "host" not in oc:
        raise ConfigError("external oracle needs a command or host/port")
    return ExternalOracle(space, command=oc.get("command"), host=oc.get("host"), port=oc.get("port"),
                          timeout=oc.get("timeout"), metadata={"acc_env": oc.get("acc_env")})


def resolve_acc_env(oracle) -> float:
    if oracle.acc_env is not None:
        return oracle.acc_env
    if isinstance(oracle, SyntheticOracle):
        return oracle.max_acc()
    raise ConfigError("rescaled reward needs acc_env (config or oracle metadata)")


def agent_config(cfg: dict, seed: int, oracle=None) -> AgentConfig:
    a = dict(cfg["agent"])
    a["exploration"] = Exploration(**a["exploration"])
    rw = dict(a["reward"])
    if rw["kind"] == "rescaled" and rw.get("acc_env") is None:
        rw["acc_env"] = resolve_acc_env(oracle)
    a["reward"] = RewardMode(**rw)
    return AgentConfig(seed=seed, **a)


# --- logs --------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class StepLog:
    """Per-seed JSONL writer; flushes each record so aborted runs keep their prefix."""

    def __init__(self, path: Path, header: dict):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")
        self._write({"header": header})

    def _write(self, obj):
        self._fh.write(_dumps(obj) + "\n")
        self._fh.flush()

    def __call__(self, rec: dict):
        self._write(rec)

    def finish(self, final: dict):
        self._write({"final": final})

    def close(self):
        self._fh.close()


def read_log(path) -> dict:
    header, steps, final = None, [], None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: corrupt log line ({e.msg})") from None
            if "header" in obj:
                header = obj["header"]
            elif "final" in obj:
                final = obj["final"]
            else:
                steps.append(obj)
    if header is None:
        raise ValueError(f"{path}: log has no header")
    return {"path": str(path), "header": header, "steps": steps, "final": final}


def _state_to_list(state) -> list:
    return [m.tolist() for m in state]


def _final_record(result, kind: str) -> dict:
    return {
        "kind": kind,
        "best_arch_key": result.best_key,
        "best_valid_acc": result.best_valid,
        "best_test_acc": result.best_test,
        "best_step": result.best_step,
        "final_state": _state_to_list(result.final_state),
    }


# --- per-seed workers ----------------------------------------------------------


def _header(cfg, seed, kind, space, agent_cfg: AgentConfig | None, K: int) -> dict:
    return {
        "kind": kind,
        "seed": seed,
        "space": space.to_dict(),
        "oracle": cfg["oracle"],
        "K": K,
        "agent": agent_cfg.to_dict() if agent_cfg is not None else None,
    }


def _search_logged(cfg: dict, seed: int, path: str):
    space = build_space(cfg)
    with build_oracle(cfg, space) as oracle:
        acfg = agent_config(cfg, seed, oracle)
        sink = StepLog(path, _header(cfg, seed, "l2nas", space, acfg, acfg.K))
        try:
            res = run_search(space, oracle, acfg, on_step=sink)
            sink.finish(_final_record(res, "l2nas"))
        finally:
            sink.close()
    return res


def _run_l2nas_seed(cfg: dict, seed: int, path: str) -> str:
    _search_logged(cfg, seed, path)
    return path


class _RandomSearch:
    """Random-search comparator sharing run_search's log record layout."""

    def __init__(self, space, oracle, seed: int, K: int):
        self.space, self.oracle = space, oracle
        self.rng = np.random.default_rng(seed)
        self.tracker = TopKTracker(K)
        self.best = None

    def run(self, steps: int, on_step=None) -> SearchResult:
        log = []
        for step in range(steps):
            arch = random_arch(self.space, self.rng)
            acc = self.oracle.query(arch, "valid")
            self.tracker.offer(arch, acc)
            if self.best is None or acc > self.best[1]:
                self.best = (arch.key, acc, step)
            rec = {
                "step": step, "arch_key": arch.key, "valid_acc": acc, "reward": None,
                "epsilon_or_phase": "random", "C": 0, "critic_loss": None, "mean_q": None,
                "best_so_far": self.best[1],
            }
            log.append(rec)
            if on_step is not None:
                on_step(rec)
        best_test = None
        if self.best is not None:
            best_test = self.oracle.query(parse_arch_key(self.space, self.best[0]), "test")
        return SearchResult(
            self.best[0] if self.best else None, self.best[1] if self.best else None, best_test,
            self.best[2] if self.best else None, [r["best_so_far"] for r in log],
            self.tracker.mean(self.space), [(a.key, acc) for a, acc in self.tracker.entries], log,
        )


def random_search(space, oracle, steps: int, seed: int, K: int = 64, on_step=None):
    return _RandomSearch(space, oracle, seed, K).run(steps, on_step)


def _run_random_seed(cfg: dict, seed: int, path: str) -> str:
    space = build_space(cfg)
    K = cfg["agent"]["K"]
    with build_oracle(cfg, space) as oracle:
        sink = StepLog(path, _header(cfg, seed, "random", space, None, K))
        try:
            res = random_search(space, oracle, cfg["agent"]["steps"], seed, K, on_step=sink)
            sink.finish(_final_record(res, "random"))
        finally:
            sink.close()
    return path


def _fan_out(fn, cfg: dict, paths: dict[int, Path]) -> list[str]:
    if cfg.get("workers", 1) <= 1 or len(paths) <= 1:
        return [fn(cfg, seed, str(p)) for seed, p in paths.items()]
    with concurrent.futures.ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
        futs = [pool.submit(fn, cfg, seed, str(p)) for seed, p in paths.items()]
        return [f.result() for f in futs]


# --- commands ---------------------------------------------------------------------


def cmd_run(cfg: dict) -> dict:
    out = Path(cfg["out"])
    paths = {seed: out / f"l2nas_seed{seed}.jsonl" for seed in cfg["seeds"]}
    logs = _fan_out(_run_l2nas_seed, cfg, paths)
    report = cmd_report(logs, oracle_cfg=cfg)
    _write_json(out / "summary.json", report)
    return report


def cmd_baseline_random(cfg: dict) -> dict:
    out = Path(cfg["out"])
    paths = {seed: out / f"random_seed{seed}.jsonl" for seed in cfg["seeds"]}
    logs = _fan_out(_run_random_seed, cfg, paths)
    report = cmd_report(logs, oracle_cfg=cfg)
    _write_json(out / "summary_random.json", report)
    return report


def cmd_enumerate(cfg: dict, K: int, path=None) -> dict:
    space = build_space(cfg)
    with build_oracle(cfg, space) as oracle:
        top = enumerate_top(space, oracle, K)
        entries = [
            {"key": a.key, "valid_acc": acc, "test_acc": oracle.query(a, "test")} for a, acc in top
        ]
    doc = {
        "space": space.name,
        "K": K,
        "entries": entries,
        "mean_matrix": _state_to_list(mean_matrix([a for a, _ in top])) if top else None,
    }
    if path is not None:
        _write_json(path, doc)
    return doc


def queries_to_reach(curve: list[float], target: float) -> int | None:
    """Number of queries until best-so-far first reaches ``target``; None if never."""
    for i, v in enumerate(curve):
        if v >= target:
            return i + 1
    return None


def cmd_transfer(pre_cfg: dict, ft_cfg: dict) -> dict:
    """Pretrain on ``pre_cfg``'s environment, fine-tune and run a fresh control on ``ft_cfg``'s.

    Pretrain and fine-tune seeds are paired positionally. The control agent
    uses the fine-tune protocol (K, steps, warm-up, rescaled reward) from
    freshly initialised networks.
    """
    out = Path(ft_cfg["out"])
    ft = {"K": 100, "steps": 1000, "W": 500, **ft_cfg.get("finetune", {})}
    pre_space, ft_space = build_space(pre_cfg), build_space(ft_cfg)
    if not same_shape(pre_space, ft_space):
        raise ConfigError(f"cannot transfer between {pre_space.shapes} and {ft_space.shapes}")
    if len(pre_cfg["seeds"]) != len(ft_cfg["seeds"]):
        raise ConfigError("pretrain and fine-tune seed lists must pair up")
    pairs = []
    for pre_seed, ft_seed in zip(pre_cfg["seeds"], ft_cfg["seeds"]):
        ckpt = out / f"pretrain_seed{pre_seed}.ckpt.json"
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        pre_log = out / f"pretrain_seed{pre_seed}.jsonl"
        res = _search_logged(pre_cfg, pre_seed, str(pre_log))
        save_checkpoint(res.agent, ckpt)

        with build_oracle(ft_cfg, ft_space) as oracle:
            acc_env = resolve_acc_env(oracle)
            reward = RewardMode("rescaled", acc_env)
            header_extra = {"acc_env": acc_env, "pretrain_checkpoint": str(ckpt), "finetune": ft}

            ft_path = out / f"finetune_seed{ft_seed}.jsonl"
            sink = StepLog(ft_path, {**_header(ft_cfg, ft_seed, "finetune", ft_space, None, ft["K"]),
                                     **header_extra})
            try:
                ft_res = fine_tune(ckpt, oracle, K=ft["K"], steps=ft["steps"], W=ft["W"],
                                   reward=reward, seed=ft_seed, on_step=sink)
                sink.finish(_final_record(ft_res, "finetune"))
            finally:
                sink.close()

            fresh_cfg = res.agent.config.replace(
                K=ft["K"], steps=ft["steps"], reward=reward, seed=ft_seed,
                exploration=Exploration(kind="warmup", warmup_steps=ft["W"]),
            )
            fresh_path = out / f"fresh_seed{ft_seed}.jsonl"
            sink = StepLog(fresh_path, {**_header(ft_cfg, ft_seed, "fresh", ft_space, fresh_cfg, ft["K"]),
                                        **header_extra})
            try:
                fresh_res = run_search(ft_space, oracle, agent=Agent(ft_space, fresh_cfg), on_step=sink)
                sink.finish(_final_record(fresh_res, "fresh"))
            finally:
                sink.close()
        pairs.append(_transfer_pair(pre_seed, ft_seed, pre_log, ft_path, fresh_path, ckpt))
    reached = [p["queries_to_reach"] for p in pairs]
    report = {
        "pairs": pairs,
        "median_queries_to_reach": (
            statistics.median(ft["steps"] + 1 if r is None else r for r in reached) if pairs else None
        ),
        "finetune_steps": ft["steps"],
    }
    _write_json(out / "summary_transfer.json", report)
    return report


def _transfer_pair(pre_seed, ft_seed, pre_log, ft_path, fresh_path, ckpt) -> dict:
    ft_log, fresh_log = read_log(ft_path), read_log(fresh_path)
    ft_curve = [r["best_so_far"] for r in ft_log["steps"]]
    fresh_curve = [r["best_so_far"] for r in fresh_log["steps"]]
    target = fresh_curve[-1] if fresh_curve else None
    return {
        "pretrain_seed": pre_seed,
        "finetune_seed": ft_seed,
        "pretrain_log": str(pre_log),
        "checkpoint": str(ckpt),
        "finetune_log": str(ft_path),
        "fresh_log": str(fresh_path),
        "acc_env": ft_log["header"].get("acc_env"),
        "fresh_best": target,
        "finetune_best": ft_curve[-1] if ft_curve else None,
        "queries_to_reach": queries_to_reach(ft_curve, target) if target is not None else None,
    }


# --- reports -----------------------------------------------------------------------


def replay_tracker(steps: list[dict], space: SearchSpaceSpec, K: int) -> TopKTracker:
    """Rebuild the top-K tracker from a step log."""
    tracker = TopKTracker(K)
    for rec in steps:
        tracker.offer(parse_arch_key(space, rec["arch_key"]), rec["valid_acc"])
    return tracker


def _mean_std(xs: list[float]) -> tuple[float | None, float | None]:
    xs = [x for x in xs if x is not None]
    if not xs:
        return None, None
    return float(np.mean(xs)), float(np.std(xs))


def _rank_of(space, oracle, acc: float) -> int | None:
    """1 + number of architectures strictly better than ``acc``."""
    if space.size > ENUMERATION_CAP:
        return None
    if isinstance(oracle, SyntheticOracle):
        accs = oracle.landscape.acc(oracle.all_choices())
    else:
        accs = np.array([oracle.query(a, "valid") for a in iter_archs(space)])
    return int((accs > acc).sum()) + 1


def cmd_report(log_paths, enumeration=None, oracle_cfg: dict | None = None) -> dict:
    """Aggregate per-seed logs; everything is recomputed from the log records.

    ``enumeration`` is a cmd_enumerate document (or path) for state-vs-truth
    deviation; ``oracle_cfg`` enables rank-of-best when the space is enumerable.
    """
    if isinstance(enumeration, (str, Path)):
        enumeration = json.loads(Path(enumeration).read_text(encoding="utf-8"))
    runs = []
    oracle = space_for_rank = None
    if oracle_cfg is not None:
        space_for_rank = build_space(oracle_cfg)
        if space_for_rank.size <= ENUMERATION_CAP and oracle_cfg["oracle"]["kind"] != "external":
            oracle = build_oracle(oracle_cfg, space_for_rank)
    for p in log_paths:
        lg = read_log(p)
        space = SearchSpaceSpec.from_dict(lg["header"]["space"])
        steps = lg["steps"]
        curve = []
        best = None
        for rec in steps:
            if best is None or rec["valid_acc"] > best[1]:
                best = (rec["arch_key"], rec["valid_acc"], rec["step"])
            curve.append(best[1])
        tracker = replay_tracker(steps, space, lg["header"]["K"])
        state = tracker.mean(space)
        run = {
            "log": lg["path"],
            "kind": lg["header"]["kind"],
            "seed": lg["header"]["seed"],
            "steps": len(steps),
            "best_arch_key": best[0] if best else None,
            "best_valid_acc": best[1] if best else None,
            "best_step": best[2] if best else None,
            "best_test_acc": (lg["final"] or {}).get("best_test_acc") if best else None,
            "best_at_budget": {str(b): curve[b - 1] for b in BUDGETS if b <= len(curve)},
            "curve": curve,
            "final_state": _state_to_list(state),
        }
        if enumeration and enumeration.get("mean_matrix") is not None and steps:
            truth = np.concatenate([np.ravel(m) for m in enumeration["mean_matrix"]])
            mine = np.concatenate([np.ravel(m) for m in state])
            run["state_mad"] = float(np.mean(np.abs(mine - truth)))
        if oracle is not None and best is not None:
            run["rank_of_best"] = _rank_of(space_for_rank, oracle, best[1])
        runs.append(run)
    vmean, vstd = _mean_std([r["best_valid_acc"] for r in runs])
    tmean, tstd = _mean_std([r["best_test_acc"] for r in runs])
    summary = {
        "n_runs": len(runs),
        "best_valid_mean": vmean, "best_valid_std": vstd,
        "best_test_mean": tmean, "best_test_std": tstd,
        "best_at_budget_mean": {
            str(b): float(np.mean([r["best_at_budget"][str(b)] for r in runs]))
            for b in BUDGETS if runs and all(str(b) in r["best_at_budget"] for r in runs)
        },
    }
    if runs and all("state_mad" in r for r in runs):
        summary["state_mad_mean"] = float(np.mean([r["state_mad"] for r in runs]))
    if runs and all("rank_of_best" in r for r in runs):
        summary["rank_of_best"] = [r["rank_of_best"] for r in runs]
    if oracle is not None:
        oracle.close()
    return {"runs": runs, "summary": summary}


def format_table(report: dict) -> str:
    """Plain-text comparison table, one row per run plus the mean +- std line."""
    lines = [f"{'kind':<9}{'seed':>6}{'steps':>7}{'best valid':>12}{'best test':>12}{'step':>7}"]
    for r in report["runs"]:
        fmt = lambda x: f"{100 * x:.2f}" if x is not None else "-"  # noqa: E731
        lines.append(f"{r['kind']:<9}{r['seed']:>6}{r['steps']:>7}{fmt(r['best_valid_acc']):>12}"
                     f"{fmt(r['best_test_acc']):>12}{r['best_step'] if r['best_step'] is not None else '-':>7}")
    s = report["summary"]
    if s["best_valid_mean"] is not None:
        test = (f"{100 * s['best_test_mean']:.2f} +- {100 * s['best_test_std']:.2f}"
                if s["best_test_mean"] is not None else "-")
        lines.append(f"mean valid {100 * s['best_valid_mean']:.2f} +- {100 * s['best_valid_std']:.2f}"
                     f"   mean test {test}")
    return "\n".join(lines)


def _write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
