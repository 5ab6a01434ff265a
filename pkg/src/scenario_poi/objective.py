"""Contrastive, recommendation and combined losses."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import torch

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12
_warned_zero_norm = False


@dataclass
class LossBreakdown:
    l_con_user: torch.Tensor
    l_con_poi: torch.Tensor
    l_rec: torch.Tensor
    l_final: torch.Tensor
    scenario_id: int = -1

    def as_floats(self) -> dict[str, float]:
        return {
            "l_con_user": float(self.l_con_user.detach()),
            "l_con_poi": float(self.l_con_poi.detach()),
            "l_rec": float(self.l_rec.detach()),
            "l_final": float(self.l_final.detach()),
        }


def cosine_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """All-pairs cosine similarity; rows with zero norm give similarity 0."""
    na = a.norm(dim=1, keepdim=True)
    nb = b.norm(dim=1, keepdim=True)
    global _warned_zero_norm
    if not _warned_zero_norm and (bool((na <= NORM_EPS).any()) or bool((nb <= NORM_EPS).any())):
        logger.warning("zero-norm rows in contrastive views; their similarities are taken as 0")
        _warned_zero_norm = True
    return (a / na.clamp_min(NORM_EPS)) @ (b / nb.clamp_min(NORM_EPS)).T


def info_nce_pair(view_a: torch.Tensor, view_b: torch.Tensor, tau: float = 0.1) -> torch.Tensor:
    """InfoNCE between two aligned views; negatives are the other rows of view_b."""
    if view_a.shape[0] != view_b.shape[0] or view_a.shape[0] < 1:
        raise ValueError("views must have the same nonzero number of rows")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    logits = cosine_matrix(view_a, view_b) / tau
    # logsumexp subtracts the row max internally
    return (torch.logsumexp(logits, dim=1) - logits.diagonal()).mean()


def contrastive_sum(views: Sequence[torch.Tensor], tau: float = 0.1) -> torch.Tensor:
    total = None
    for a, b in itertools.combinations(views, 2):
        term = info_nce_pair(a, b, tau)
        total = term if total is None else total + term
    return total


def rec_loss(scores: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean softmax cross-entropy of the target POI."""
    if not bool(torch.isfinite(scores).all()):
        raise FloatingPointError("non-finite candidate scores")
    log_z = torch.logsumexp(scores, dim=1)
    return (log_z - scores.gather(1, targets.view(-1, 1)).squeeze(1)).mean()


def final_loss(
    l_con_user: torch.Tensor,
    l_con_poi: torch.Tensor,
    l_rec: torch.Tensor,
    lam: float = 0.1,
    scenario_id: int = -1,
) -> LossBreakdown:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    total = lam * (l_con_user + l_con_poi) + (1.0 - lam) * l_rec
    return LossBreakdown(l_con_user, l_con_poi, l_rec, total, scenario_id)
