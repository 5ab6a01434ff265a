"""Scenario-conflict detection and parameter duplication.

Every trainable tensor is registered by name. While a tensor is shared, the
per-scenario gradients it receives are accumulated; at each checkpoint the
mean gradients are compared by cosine similarity and a tensor whose worst
pair falls below the threshold is duplicated. The two copies are then routed
to disjoint scenario groups for the rest of training.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import torch


@dataclass
class SplitRecord:
    param: str
    epoch: int
    step: int
    min_similarity: float
    group_a: tuple[int, ...]
    group_b: tuple[int, ...]

    def to_line(self) -> str:
        a = ",".join(map(str, self.group_a))
        b = ",".join(map(str, self.group_b))
        return f"{self.epoch}\t{self.param}\t{self.min_similarity!r}\t{a}\t{b}"

    @classmethod
    def from_line(cls, line: str, step: int = -1) -> "SplitRecord":
        epoch, param, sim, a, b = line.rstrip("\n").split("\t")
        parse = lambda s: tuple(int(x) for x in s.split(",") if x)  # noqa: E731
        return cls(param, int(epoch), step, float(sim), parse(a), parse(b))


class ParamRegistry:
    """Named trainable tensors and their scenario routing."""

    def __init__(self, n_scenarios: int = 8):
        self.n_scenarios = n_scenarios
        self.params: dict[str, list[torch.Tensor]] = {}
        self.copy_map: dict[str, list[int] | None] = {}
        self.frozen: set[str] = set()
        self._initial_count = 0

    def add(self, name: str, tensor: torch.Tensor, trainable: bool = True) -> torch.Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        t = tensor.detach().clone().requires_grad_(trainable)
        self.params[name] = [t]
        self.copy_map[name] = None
        if not trainable:
            self.frozen.add(name)
        self._initial_count += t.numel()
        return t

    def names(self) -> list[str]:
        return list(self.params)

    def trainable(self) -> list[str]:
        return [n for n in self.params if n not in self.frozen]

    def is_split(self, name: str) -> bool:
        return self.copy_map[name] is not None

    def route(self, name: str, scenario: int) -> torch.Tensor:
        try:
            copies = self.params[name]
        except KeyError:
            raise KeyError(f"unknown parameter {name!r}") from None
        cmap = self.copy_map[name]
        return copies[0] if cmap is None else copies[cmap[scenario]]

    def copy_index(self, name: str, scenario: int) -> int:
        cmap = self.copy_map[name]
        return 0 if cmap is None else cmap[scenario]

    def split(self, name: str, group_b: set[int] | tuple[int, ...]) -> torch.Tensor:
        """Duplicate ``name``; scenarios in ``group_b`` use the new copy."""
        if self.is_split(name):
            raise RuntimeError(f"parameter {name!r} already split")
        original = self.params[name][0]
        twin = original.detach().clone().requires_grad_(original.requires_grad)
        self.params[name].append(twin)
        self.copy_map[name] = [1 if s in group_b else 0 for s in range(self.n_scenarios)]
        return twin

    def param_count(self) -> int:
        return sum(t.numel() for copies in self.params.values() for t in copies)

    @property
    def initial_count(self) -> int:
        return self._initial_count

    def all_tensors(self) -> list[tuple[str, int, torch.Tensor]]:
        return [(n, i, t) for n, copies in self.params.items() for i, t in enumerate(copies)]


class GradientBuffer:
    """Per (parameter, scenario) gradient sums over the current window."""

    def __init__(self, n_scenarios: int = 8):
        self.n_scenarios = n_scenarios
        self.sums: dict[str, list[torch.Tensor | None]] = {}
        self.counts: dict[str, list[int]] = {}

    def record(self, registry: ParamRegistry, name: str, scenario: int, grad: torch.Tensor) -> None:
        if registry.is_split(name):
            return
        expected = registry.params[name][0].shape
        if grad.shape != expected:
            raise ValueError(f"gradient shape {tuple(grad.shape)} != parameter shape {tuple(expected)}")
        sums = self.sums.setdefault(name, [None] * self.n_scenarios)
        counts = self.counts.setdefault(name, [0] * self.n_scenarios)
        g = grad.detach()
        sums[scenario] = g.clone() if sums[scenario] is None else sums[scenario] + g
        counts[scenario] += 1

    def mean(self, name: str, scenario: int) -> torch.Tensor | None:
        counts = self.counts.get(name)
        if not counts or counts[scenario] == 0:
            return None
        return self.sums[name][scenario] / counts[scenario]

    def reset(self) -> None:
        self.sums.clear()
        self.counts.clear()


def pairwise_similarity(buffer: GradientBuffer, name: str) -> tuple[np.ndarray, list[int]]:
    """Cosine similarity of normalised mean gradients between scenarios.

    Returns the full matrix (NaN for excluded scenarios) and the list of
    active scenarios, i.e. those with at least one record and nonzero norm.
    """
    n = buffer.n_scenarios
    units: dict[int, torch.Tensor] = {}
    for s in range(n):
        g = buffer.mean(name, s)
        if g is None:
            continue
        g = g.reshape(-1)
        norm = torch.linalg.vector_norm(g)
        if float(norm) > 0.0:
            units[s] = g / norm
    sim = np.full((n, n), np.nan)
    active = sorted(units)
    for i in active:
        sim[i, i] = 1.0
        for j in active:
            if j > i:
                sim[i, j] = sim[j, i] = float(units[i] @ units[j])
    return sim, active


def cluster_scenarios(sim: np.ndarray, active: list[int], n_scenarios: int) -> tuple[tuple[int, ...], tuple[int, ...], float]:
    """Seed-pair grouping.

    The most conflicting active pair seeds two groups; every other active
    scenario joins the seed it is more similar to (ties to the first seed);
    inactive scenarios join the first seed's group.
    """
    best = None
    for i, j in itertools.combinations(active, 2):
        if best is None or sim[i, j] < best[0]:
            best = (sim[i, j], i, j)
    if best is None:
        raise ValueError("need at least two active scenarios")
    s_min, a, b = best
    group_a, group_b = [a], [b]
    for k in range(n_scenarios):
        if k in (a, b):
            continue
        if k in active and sim[k, b] > sim[k, a]:
            group_b.append(k)
        else:
            group_a.append(k)
    return tuple(sorted(group_a)), tuple(sorted(group_b)), float(s_min)


def detect_and_split(
    registry: ParamRegistry,
    buffer: GradientBuffer,
    threshold: float = -0.5,
    epoch: int = 0,
    step: int = 0,
    optimizer=None,
) -> list[SplitRecord]:
    """Split every still-shared parameter whose worst pair is below ``threshold``.

    Optimizer state (if an optimizer with ``clone_state`` is given) is copied
    to the new tensor. The buffer is reset afterwards.
    """
    records = []
    for name in registry.trainable():
        if registry.is_split(name):
            continue
        sim, active = pairwise_similarity(buffer, name)
        if len(active) < 2:
            continue
        group_a, group_b, s_min = cluster_scenarios(sim, active, registry.n_scenarios)
        if not s_min < threshold:
            continue
        original = registry.params[name][0]
        twin = registry.split(name, set(group_b))
        if optimizer is not None:
            optimizer.clone_state(original, twin)
        records.append(SplitRecord(name, epoch, step, s_min, group_a, group_b))
    buffer.reset()
    return records
