"""Command line entry point: ``safeagc <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, load_config
from .control.agent import Agent, TrainingDiverged, obs_dim_for
from .control.nets import CheckpointError
from .harness.compare import (
    PiPolicy, compare, metrics_dict, pi_from_config, rows_csv, tune_pi, write_trace_csv,
)
from .harness.episode import AgentPolicy, run_episode
from .harness.scenario import LoadStep, RampAttack, Scenario
from .harness.training import train
from .plant import eigenvalues
from .safety import FLAG, OFF, RECTIFY, SafetyConfig

EXIT_USAGE = 2
EXIT_FAIL = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default="default", help="YAML config path or 'default'")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--mode", choices=(FLAG, RECTIFY, OFF), default=None)
    common.add_argument("--episodes", type=int, default=None)

    p = _Parser(prog="safeagc", description="Barrier-filtered AGC simulation and training")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate-model", parents=[common], help="print dimensions, eigenvalues, checks")
    sub.add_parser("demo-cbf", parents=[common], help="scripted ramp attack with the filter on or off")
    sub.add_parser("train", parents=[common], help="train the agent, write report.json and agent.ckpt")
    ev = sub.add_parser("eval", parents=[common], help="run a checkpoint on the load-step scenario")
    ev.add_argument("--checkpoint", required=True)
    cp = sub.add_parser("compare", parents=[common], help="tuned PI vs a checkpoint on the load-step scenario")
    cp.add_argument("--checkpoint", required=True)
    return p


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate_model(args, cfg) -> int:
    model = cfg.model
    ev = eigenvalues(model)
    print(f"n={model.n} m={model.m} g={model.g} ties={model.n_ties} backend={kernels.BACKEND}")
    print("states: " + " ".join(model.state_labels))
    print("eigenvalue_real,eigenvalue_imag")
    for v in ev:
        print(f"{v.real:.6f},{v.imag:.6f}")
    checks = {
        "stable": bool(np.all(ev.real < 0)),
        "finite": bool(np.all(np.isfinite(model.A))),
    }
    x_ss = np.linalg.solve(model.A, -(model.B1 @ np.ones(model.m) * 0.01))
    checks["equilibrium_residual_ok"] = bool(np.allclose(model.derivative(x_ss, np.full(model.m, 0.01), np.zeros(model.g)), 0, atol=1e-10))
    for k, v in checks.items():
        print(f"check {k}={'ok' if v else 'FAIL'}")
    return 0 if all(checks.values()) else EXIT_FAIL


def _demo_scenario(cfg, mode):
    d = cfg.demo
    safety = SafetyConfig(F=d.F, alpha=tuple(d.alpha), ts_pred=d.ts_pred, mode=mode)
    return Scenario(duration=d.duration, agc_period=d.agc_period,
                    load_schedule=(LoadStep(d.load_step_time, d.load_step_area, d.load_step),),
                    safety=safety, mode=mode)


def run_demo(cfg, mode: str, record_dt: float = 0.01):
    d = cfg.demo
    scen = _demo_scenario(cfg, mode)
    attack = RampAttack(rate=d.ramp_rate, generator=d.ramp_generator, n_generators=cfg.model.g)
    return run_episode(scen, attack, cfg.model, cfg.reward, record_dt=record_dt)


def cmd_demo(args, cfg) -> int:
    out = _out_dir(args)
    modes = [args.mode] if args.mode else [OFF, RECTIFY]
    for mode in modes:
        tr = run_demo(cfg, mode)
        path = write_trace_csv(tr, out / f"demo_cbf_{mode}.csv")
        peak = np.abs(tr.f).max()
        print(f"mode={mode} peak_abs_df={peak:.6f} F={cfg.demo.F} exceeded={bool(peak > cfg.demo.F)} csv={path}")
    return 0


def cmd_train(args, cfg) -> int:
    out = _out_dir(args)
    try:
        report, agent = train(cfg, episodes=args.episodes, seed=args.seed, mode=args.mode)
    except TrainingDiverged as exc:
        agent = getattr(exc, "agent", None)
        if agent is not None:
            agent.save(out / "agent.ckpt")
        print(f"error=training_diverged detail={str(exc)!r}", file=sys.stderr)
        return EXIT_FAIL
    (out / "report.json").write_text(report.to_json())
    agent.save(out / "agent.ckpt")
    ma = report.moving_average
    print(f"episodes={len(report.episode_rewards)} violations={report.violation_count} "
          f"flag_episodes={len(report.flag_episodes)} final_moving_avg={ma[-1]:.6f}")
    print(f"wall_clock_s={report.wall_clock:.1f}", file=sys.stderr)
    return 0


def _load_agent(cfg, path) -> Agent:
    agent = Agent.load(path)
    want = (obs_dim_for(cfg.model.m, cfg.model.n_ties, cfg.model.g, agent.hyper), cfg.model.g)
    if (agent.obs_dim, agent.act_dim) != want:
        raise CheckpointError(f"checkpoint dims {(agent.obs_dim, agent.act_dim)} do not match model {want}")
    return agent


def cmd_eval(args, cfg) -> int:
    out = _out_dir(args)
    agent = _load_agent(cfg, args.checkpoint)
    c = compare(cfg, {"rl": AgentPolicy(agent)}, mode=args.mode or OFF)
    write_trace_csv(c.traces["rl"], out / "eval_rl.csv")
    print(json.dumps(metrics_dict(c.metrics["rl"]), sort_keys=True))
    return 0


def cmd_compare(args, cfg) -> int:
    out = _out_dir(args)
    agent = _load_agent(cfg, args.checkpoint)
    tuned = tune_pi(cfg) if cfg.pi.tune else None
    c = compare(cfg, {"pi": PiPolicy(pi_from_config(cfg, tuned)), "rl": AgentPolicy(agent)}, mode=args.mode or OFF)
    for name, tr in c.traces.items():
        write_trace_csv(tr, out / f"compare_{name}.csv")
    (out / "compare_summary.csv").write_text(rows_csv(c.summary_rows()))
    if tuned is not None:
        print(f"pi_kp={tuned.kp} pi_ki={tuned.ki}")
    for row in c.summary_rows():
        print(json.dumps(row, sort_keys=True))
    return 0


COMMANDS = {
    "validate-model": cmd_validate_model,
    "demo-cbf": cmd_demo,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.episodes is not None and args.episodes < 1:
            raise UsageError("--episodes must be >= 1")
        cfg = load_config(args.config, mode=args.mode)
        if args.seed is not None:
            cfg.training = replace(cfg.training, seed=args.seed)
    except UsageError as exc:
        print(f"error=usage detail={str(exc)!r}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error=config field={exc.field} detail={str(exc)!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"error=load detail={str(exc)!r}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
