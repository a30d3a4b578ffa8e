"""Training, evaluation, sweep and simulator-validation runners.

Every runner writes its resolved config next to its CSV output. All
randomness derives from the configured seeds, so re-running a command
reproduces its CSV files byte for byte.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..agent import AGENTS, Transition
from ..env import RewardParams, WifiEnv
from ..errors import CompatibilityError, ConfigError
from ..macsim import SimConfig, Simulator, bianchi_fixed_point
from .config import ExperimentConfig

log = logging.getLogger(__name__)

TRAIN_LOG_FIELDS = ("step", "reward", "throughput_mbps", "access_delay_ms", "itp",
                    "critic_loss", "actor_objective", "sigma")
EVAL_FIELDS = ("algorithm", "n_stas", "denoise_steps", "seed", "throughput_mbps", "access_delay_ms")
SWEEP_FIELDS = ("axis", "value", "algorithm", "seed", "throughput_mbps", "access_delay_ms")
VALIDATE_FIELDS = ("n", "slots", "sim_p", "oracle_p", "oracle_tau", "rel_error", "ok")


@dataclass
class RunArtifacts:
    out_dir: Path
    config_path: Path
    training_logs: list[Path] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    eval_summary: Path | None = None


def _open_dir(path) -> Path:
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {d}: {exc}") from exc
    return d


def _write_csv(path: Path, fieldnames, rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return path


def _make_env(cfg: ExperimentConfig, seed: int) -> WifiEnv:
    return WifiEnv(cfg.sim, seed=seed, dt_us=cfg.dt_us, reward_params=RewardParams(cfg.reward_lambda))


def _delay_ms(metrics) -> float:
    n = sum(m.success_count for m in metrics)
    return float(sum(m.access_delay_sum_us for m in metrics) / n / 1000.0) if n else float("nan")


def train_one(cfg: ExperimentConfig, seed: int, out_dir=None):
    """Run the interaction loop once. Returns ``(agent or None, log rows)``."""
    env = _make_env(cfg, seed)
    agent = None
    if cfg.algorithm != "beb":
        agent = AGENTS[cfg.algorithm](env.state_dim, env.action_dim, cfg.agent, seed)
    ckpt_root = Path(out_dir) / "checkpoints" if out_dir is not None and agent is not None else None
    rows = []
    s = env.reset()
    for step in range(1, cfg.interactions + 1):
        losses = None
        if agent is None:
            m, s_next, r = env.step_static()
            sigma = ""
        else:
            sigma = agent.noise.sigma
            a = agent.act(s, explore=True)
            m, s_next, r = env.step(a)
            losses = agent.observe(Transition(s, a, r, s_next))
        rows.append({
            "step": step, "reward": r, "throughput_mbps": m.throughput_mbps,
            "access_delay_ms": m.mean_access_delay_ms, "itp": s_next[0],
            "critic_loss": "" if losses is None else losses[0],
            "actor_objective": "" if losses is None else losses[1],
            "sigma": sigma,
        })
        s = s_next
        if ckpt_root is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            agent.save(ckpt_root / f"step_{step:06d}")
    if ckpt_root is not None:
        agent.save(ckpt_root / "final")
    return agent, rows


def evaluate_policy(cfg: ExperimentConfig, agent, seed: int) -> dict:
    """One exploration-free episode on the simulator stream paired with ``seed``."""
    eval_seed = seed + cfg.eval_seed_offset
    env = _make_env(cfg, eval_seed)
    rng = np.random.default_rng(eval_seed)
    s = env.reset()
    metrics = []
    for _ in range(cfg.eval_periods):
        if agent is None:
            m, s, _ = env.step_static()
        else:
            m, s, _ = env.step(agent.act(s, explore=False, rng=rng))
        metrics.append(m)
    return {
        "throughput_mbps": float(np.mean([m.throughput_mbps for m in metrics])),
        "access_delay_ms": _delay_ms(metrics),
    }


def _train_and_eval(args):
    cfg, seed, out_dir = args
    agent, rows = train_one(cfg, seed, out_dir)
    if out_dir is not None:
        _write_csv(Path(out_dir) / "training_log.csv", TRAIN_LOG_FIELDS, rows)
    return evaluate_policy(cfg, agent, seed)


def _aggregate(rows, key_fields, value_fields=("throughput_mbps", "access_delay_ms")):
    out = {k: rows[0][k] for k in key_fields}
    mean = dict(out, seed="mean")
    std = dict(out, seed="std")
    for f in value_fields:
        vals = np.array([r[f] for r in rows], dtype=np.float64)
        mean[f] = float(np.mean(vals))
        std[f] = float(np.std(vals))
    return [mean, std]


def cmd_train(cfg: ExperimentConfig) -> RunArtifacts:
    out = _open_dir(cfg.out_dir)
    cfg.save(out / "config.yaml")
    art = RunArtifacts(out, out / "config.yaml")
    for seed in cfg.seeds:
        seed_dir = _open_dir(out / f"seed_{seed}")
        _, rows = train_one(cfg, seed, seed_dir)
        art.training_logs.append(_write_csv(seed_dir / "training_log.csv", TRAIN_LOG_FIELDS, rows))
        if cfg.algorithm != "beb":
            art.checkpoints.append(seed_dir / "checkpoints" / "final")
        log.info("trained %s seed %d: mean reward %.4f", cfg.algorithm, seed,
                 np.mean([r["reward"] for r in rows]))
    return art


def _load_agent(cfg: ExperimentConfig, checkpoint: Path, seed: int):
    if (checkpoint / "manifest.json").exists():
        path = checkpoint
    else:
        path = checkpoint / f"seed_{seed}" / "checkpoints" / "final"
        if not (path / "manifest.json").exists():
            raise ConfigError(f"no checkpoint for seed {seed} under {checkpoint}")
    agent = AGENTS[cfg.algorithm].load(path, seed)
    n = cfg.sim.n_stas
    if agent.state_dim != n + 1 or agent.action_dim != 2 * n:
        raise CompatibilityError(f"checkpoint was trained for {agent.action_dim // 2} STAs, scenario has {n}")
    return agent


def cmd_eval(cfg: ExperimentConfig, checkpoint=None) -> list[dict]:
    if cfg.algorithm != "beb" and checkpoint is None:
        raise ConfigError(f"evaluating {cfg.algorithm} needs a checkpoint")
    out = _open_dir(cfg.out_dir)
    cfg.save(out / "eval_config.yaml")
    rows = []
    for seed in cfg.seeds:
        agent = None if cfg.algorithm == "beb" else _load_agent(cfg, Path(checkpoint), seed)
        res = evaluate_policy(cfg, agent, seed)
        rows.append({"algorithm": cfg.algorithm, "n_stas": cfg.sim.n_stas,
                     "denoise_steps": cfg.agent.denoise_steps, "seed": seed, **res})
    rows += _aggregate(rows, ("algorithm", "n_stas", "denoise_steps"))
    _write_csv(out / "eval_summary.csv", EVAL_FIELDS, rows)
    return rows


def sweep_point_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "stas":
        return cfg.with_overrides(**{"sim.n_stas": int(value)})
    if axis == "denoise_steps":
        return cfg.with_overrides(**{"agent.denoise_steps": int(value)})
    raise ConfigError(f"unknown sweep axis {axis!r}; use 'stas' or 'denoise_steps'")


def cmd_sweep(cfg: ExperimentConfig, axis: str, values, workers: int = 1) -> list[dict]:
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = _open_dir(cfg.out_dir)
    cfg.save(out / "config.yaml")
    jobs, keys = [], []
    for v in values:
        point = sweep_point_config(cfg, axis, v)
        for seed in cfg.seeds:
            seed_dir = _open_dir(out / f"{axis}_{v}" / f"seed_{seed}")
            jobs.append((point, seed, seed_dir))
            keys.append((v, seed))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_and_eval, jobs))
    else:
        results = [_train_and_eval(j) for j in jobs]
    rows = []
    for v in values:
        per_seed = [{"axis": axis, "value": v, "algorithm": cfg.algorithm, "seed": seed, **res}
                    for (kv, seed), res in zip(keys, results) if kv == v]
        rows += per_seed + _aggregate(per_seed, ("axis", "value", "algorithm"))
    _write_csv(out / "sweep.csv", SWEEP_FIELDS, rows)
    return rows


def validate_point(sim_cfg: SimConfig, n: int, seed: int, min_slots: int = 1_000_000,
                   chunk_us: float = 10e6) -> dict:
    """Measured conditional collision probability vs the saturation fixed point."""
    cfg = sim_cfg.replace(n_stas=n, beb_agg=1, per_mpdu_error_prob=0.0)
    m_stages = int(round(math.log2((cfg.cw_max + 1) / (cfg.cw_min + 1))))
    sim = Simulator(cfg, seed)
    tx = ack = slots = 0
    while slots < min_slots:
        m = sim.run_for(chunk_us)
        tx += int(m.tx_count.sum())
        ack += int(m.ack_count.sum())
        slots += m.events
    sim_p = 1.0 - ack / tx if tx else 0.0
    tau, p = bianchi_fixed_point(n, cfg.cw_min, m_stages)
    rel = abs(sim_p - p) / p if p > 0 else abs(sim_p)
    return {"n": n, "slots": slots, "sim_p": sim_p, "oracle_p": p, "oracle_tau": tau,
            "rel_error": rel, "ok": rel <= 0.05}


def cmd_validate(cfg: ExperimentConfig, ns=(1, 5, 10, 20), min_slots: int = 1_000_000) -> tuple[list[dict], bool]:
    out = _open_dir(cfg.out_dir)
    cfg.save(out / "config.yaml")
    seed = cfg.seeds[0]
    rows = [validate_point(cfg.sim, n, seed, min_slots) for n in ns]
    _write_csv(out / "validate.csv", VALIDATE_FIELDS, rows)
    return rows, all(r["ok"] for r in rows)
