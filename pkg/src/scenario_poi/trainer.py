"""Scenario-batched training loop, early stopping and checkpoint persistence."""
from __future__ import annotations

import json
import logging
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import TrainConfig, parse_config_text
from .evaluator import acc_mrr, target_ranks
from .ingest import ConfigError, Trajectory, validation_split
from .matrix_io import read_matrix, write_matrix
from .model import ScenarioModel, make_batch
from .optim import Adam, AdamState
from .pipeline import PreparedData
from .scenarios import N_SCENARIOS, ScenarioLabel
from .splitter import GradientBuffer, ParamRegistry, SplitRecord, detect_and_split

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOSS_COLUMNS = ("epoch", "step", "scenario_id", "l_con_user", "l_con_poi", "l_rec", "l_final")


@dataclass
class EpochStats:
    epoch: int
    scenario_loss: dict[int, float]
    scenario_rec: dict[int, float]
    val_acc5: float | None
    n_params: int
    splits: int


@dataclass
class TrainResult:
    model: ScenarioModel
    optimizer: Adam
    config: TrainConfig
    history: list[EpochStats] = field(default_factory=list)
    loss_rows: list[tuple] = field(default_factory=list)
    splits: list[SplitRecord] = field(default_factory=list)
    best_epoch: int = -1


def scenario_batches(
    trajectories: Sequence[Trajectory],
    scenarios: Sequence[int],
    batch_size: int,
    rng: np.random.Generator,
) -> list[tuple[int, list[Trajectory]]]:
    """Shuffle within each scenario, chunk, and interleave scenarios round-robin."""
    queues = []
    scenarios = np.asarray(scenarios)
    for s in range(N_SCENARIOS):
        idx = np.flatnonzero(scenarios == s)
        if len(idx) == 0:
            continue
        idx = idx[rng.permutation(len(idx))]
        chunks = [[trajectories[i] for i in idx[k:k + batch_size]] for k in range(0, len(idx), batch_size)]
        queues.append((s, chunks))
    order = []
    depth = max((len(c) for _, c in queues), default=0)
    for k in range(depth):
        for s, chunks in queues:
            if k < len(chunks):
                order.append((s, chunks[k]))
    return order


def evaluate_ranks(model: ScenarioModel, trajectories: Sequence[Trajectory], scenarios: Sequence[int]) -> np.ndarray:
    if not trajectories:
        return np.zeros(0, dtype=np.int64)
    scores = model.score_all(trajectories, scenarios)
    return target_ranks(scores, [t.target.poi_id for t in trajectories])


def snapshot(model: ScenarioModel, opt: Adam) -> dict:
    reg = model.registry
    state = {"params": {}, "copy_map": {}, "opt": {}}
    for name, copies in reg.params.items():
        state["params"][name] = [t.detach().clone() for t in copies]
        state["copy_map"][name] = None if reg.copy_map[name] is None else list(reg.copy_map[name])
        for i, t in enumerate(copies):
            st = opt.get(t)
            if st is not None:
                state["opt"][(name, i)] = AdamState(st.step, st.m.clone(), st.v.clone())
    return state


def restore(model: ScenarioModel, opt: Adam, state: dict) -> None:
    reg = model.registry
    opt.state.clear()
    for name, copies in state["params"].items():
        trainable = name not in reg.frozen
        reg.params[name] = [t.clone().requires_grad_(trainable) for t in copies]
        reg.copy_map[name] = state["copy_map"][name]
        for i, t in enumerate(reg.params[name]):
            st = state["opt"].get((name, i))
            if st is not None:
                opt.set(t, AdamState(st.step, st.m.clone(), st.v.clone()))


def build_model(config: TrainConfig, data: PreparedData) -> ScenarioModel:
    graphs = data.build_graphs(geo_threshold_km=config.geo_threshold_km, merged=config.no_subgraph)
    return ScenarioModel(graphs, data.catalog.n_users, data.catalog.n_pois, config.dim, config.layers,
                         config.seed, config.frozen)


def train(config: TrainConfig, data: PreparedData, model: ScenarioModel | None = None) -> TrainResult:
    """Train on ``data.train``; the last ``val_fraction`` of each user's
    training trajectories is held out for early stopping on Acc@5.

    A prebuilt ``model`` may be passed (e.g. with hand-set tables); it must
    have been built from the same data.
    """
    config.validate()
    torch.set_num_threads(config.threads)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    scen_of = {id(t): lab.composite for t, lab in zip(data.train, data.train_labels)}
    fit, val = validation_split(data.train, config.val_fraction)
    fit_s = [scen_of[id(t)] for t in fit]
    val_s = [scen_of[id(t)] for t in val]

    model = model or build_model(config, data)
    reg = model.registry
    opt = Adam(config.lr, weight_decay=config.weight_decay)
    buffer = GradientBuffer(N_SCENARIOS)
    result = TrainResult(model, opt, config)
    missing = sorted(set(range(N_SCENARIOS)) - set(fit_s))
    if missing and config.epochs:
        logger.warning("no training trajectories for scenarios %s; skipped", missing)

    best_metric, best_state, stale = -math.inf, None, 0
    step = 0
    window = 0
    for epoch in range(config.epochs):
        per_loss: dict[int, list[float]] = {}
        per_rec: dict[int, list[float]] = {}
        splitting = not config.no_split and epoch >= config.warmup_epochs
        for s, chunk in scenario_batches(fit, fit_s, config.batch_size, rng):
            batch = make_batch(chunk, model.n_pois)
            lb = model.loss(batch, s, config.lam, config.tau)
            if not torch.isfinite(lb.l_final):
                raise FloatingPointError(f"non-finite loss at epoch {epoch} step {step} scenario {s}: {lb.as_floats()}")
            names = [n for n in model.used_params(s) if n not in reg.frozen]
            params = [reg.route(n, s) for n in names]
            grads = torch.autograd.grad(lb.l_final, params, allow_unused=True)
            for name, p, g in zip(names, params, grads):
                p.grad = g
                if splitting and g is not None and not reg.is_split(name):
                    buffer.record(reg, name, s, g)
            opt.step(params)
            for p in params:
                p.grad = None
            step += 1
            vals = lb.as_floats()
            result.loss_rows.append((epoch, step, s, vals["l_con_user"], vals["l_con_poi"], vals["l_rec"], vals["l_final"]))
            per_loss.setdefault(s, []).append(vals["l_final"] * len(batch))
            per_rec.setdefault(s, []).append(vals["l_rec"] * len(batch))
            if splitting:
                window += 1
                if window >= config.sim_window:
                    records = detect_and_split(reg, buffer, config.split_threshold, epoch, step, opt)
                    for r in records:
                        logger.info("split %s at epoch %d (min similarity %.3f): %s | %s",
                                    r.param, epoch, r.min_similarity, r.group_a, r.group_b)
                    result.splits.extend(records)
                    window = 0

        counts = {s: int(np.sum(np.asarray(fit_s) == s)) for s in per_loss}
        val_acc = None
        if val:
            ranks = evaluate_ranks(model, val, val_s)
            val_acc = acc_mrr(ranks)["acc@5"]
        result.history.append(EpochStats(
            epoch,
            {s: sum(v) / counts[s] for s, v in sorted(per_loss.items())},
            {s: sum(v) / counts[s] for s, v in sorted(per_rec.items())},
            val_acc, reg.param_count(), len(result.splits),
        ))
        if val_acc is not None:
            if val_acc > best_metric:
                best_metric, best_state, stale = val_acc, snapshot(model, opt), 0
                result.best_epoch = epoch
            else:
                stale += 1
                if stale >= config.patience:
                    logger.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                    break
        else:
            result.best_epoch = epoch

    if best_state is not None:
        restore(model, opt, best_state)
        result.splits = [r for r in result.splits if r.epoch <= result.best_epoch]
    return result


# -- persistence ----------------------------------------------------------

def _fname(name: str, copy: int, suffix: str = "") -> str:
    return f"{name}.{copy}{suffix}.bin"


def save_checkpoint(result: TrainResult, directory: str | Path, prepared: str | Path | None = None) -> Path:
    """Write parameters, routing, optimizer state, config and histories.

    The directory is assembled in a temporary sibling and renamed into place.
    """
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
    try:
        _write_checkpoint(result, tmp, directory, prepared)
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def _write_checkpoint(result: TrainResult, tmp: Path, final: Path, prepared) -> None:
    model, opt = result.model, result.optimizer
    reg = model.registry
    (tmp / "params").mkdir()
    (tmp / "optimizer").mkdir()
    steps = {}
    for name, i, t in reg.all_tensors():
        write_matrix(tmp / "params" / _fname(name, i), t.detach().numpy())
        st = opt.get(t)
        if st is not None:
            write_matrix(tmp / "optimizer" / _fname(name, i, ".m"), st.m.numpy())
            write_matrix(tmp / "optimizer" / _fname(name, i, ".v"), st.v.numpy())
            steps[f"{name}.{i}"] = st.step
    routing = {
        "n_scenarios": reg.n_scenarios,
        "params": {
            n: {"shape": list(reg.params[n][0].shape), "copies": len(reg.params[n]), "copy_map": reg.copy_map[n]}
            for n in reg.names()
        },
        "frozen": sorted(reg.frozen),
    }
    (tmp / "routing.json").write_text(json.dumps(routing, indent=2) + "\n", encoding="utf-8")
    (tmp / "optimizer.json").write_text(json.dumps({"steps": steps}, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    (tmp / "config.txt").write_text(result.config.to_text(), encoding="utf-8")
    with open(tmp / "splits.tsv", "w", encoding="utf-8") as fh:
        for r in result.splits:
            fh.write(r.to_line() + "\n")
    with open(tmp / "losses.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(LOSS_COLUMNS) + "\n")
        for row in result.loss_rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")
    with open(tmp / "history.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,scenario_id,l_final,l_rec,val_acc5,n_params,splits\n")
        for h in result.history:
            for s in sorted(h.scenario_loss):
                fh.write(f"{h.epoch},{s},{h.scenario_loss[s]!r},{h.scenario_rec[s]!r},"
                         f"{'' if h.val_acc5 is None else repr(h.val_acc5)},{h.n_params},{h.splits}\n")
    meta = {
        "kind": "checkpoint",
        "version": CHECKPOINT_VERSION,
        "n_users": model.n_users,
        "n_pois": model.n_pois,
        "dim": model.dim,
        "best_epoch": result.best_epoch,
        "prepared": None if prepared is None else os.path.relpath(Path(prepared).resolve(), final.resolve()),
    }
    (tmp / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def read_meta(directory: str | Path) -> dict:
    path = Path(directory) / "meta.json"
    if not path.exists():
        raise ConfigError(f"{directory} is not a checkpoint (no meta.json)")
    meta = json.loads(path.read_text(encoding="utf-8"))
    if meta.get("kind") != "checkpoint" or meta.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{directory}: incompatible checkpoint version {meta.get('version')!r} "
                          f"(expected {CHECKPOINT_VERSION})")
    return meta


def load_checkpoint(directory: str | Path, data: PreparedData) -> tuple[ScenarioModel, Adam, TrainConfig, list[SplitRecord]]:
    directory = Path(directory)
    meta = read_meta(directory)
    if meta["n_users"] != data.catalog.n_users or meta["n_pois"] != data.catalog.n_pois:
        raise ConfigError(
            f"checkpoint was trained on {meta['n_users']} users / {meta['n_pois']} POIs, "
            f"prepared data has {data.catalog.n_users} / {data.catalog.n_pois}"
        )
    from .config import resolve_config

    config = resolve_config(parse_config_text((directory / "config.txt").read_text(encoding="utf-8")))
    model = build_model(config, data)
    routing = json.loads((directory / "routing.json").read_text(encoding="utf-8"))
    reg: ParamRegistry = model.registry
    if set(routing["params"]) != set(reg.names()):
        raise ConfigError("checkpoint parameters do not match the model built from its config")
    opt = Adam(config.lr, weight_decay=config.weight_decay)
    steps = json.loads((directory / "optimizer.json").read_text(encoding="utf-8"))["steps"]
    for name, info in routing["params"].items():
        trainable = name not in reg.frozen
        copies = []
        for i in range(info["copies"]):
            arr = read_matrix(directory / "params" / _fname(name, i)).reshape(info["shape"])
            t = torch.from_numpy(arr.copy()).requires_grad_(trainable)
            copies.append(t)
            key = f"{name}.{i}"
            if key in steps:
                m = torch.from_numpy(read_matrix(directory / "optimizer" / _fname(name, i, ".m")).reshape(info["shape"]).copy())
                v = torch.from_numpy(read_matrix(directory / "optimizer" / _fname(name, i, ".v")).reshape(info["shape"]).copy())
                opt.set(t, AdamState(steps[key], m, v))
        reg.params[name] = copies
        reg.copy_map[name] = info["copy_map"]
    splits = []
    with open(directory / "splits.tsv", encoding="utf-8") as fh:
        splits = [SplitRecord.from_line(line) for line in fh if line.strip()]
    return model, opt, config, splits


def scenario_label(s: int) -> str:
    return str(ScenarioLabel.decode(s))
