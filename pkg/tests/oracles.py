"""Slow, loop-based reference implementations used only by the tests."""
import itertools
import math

import numpy as np


def conv_oracle(node_count, edges, x, layers, directed=False):
    """Mean node->edge->node passes with residual averaging, written as plain loops.

    ``edges`` holds member tuples, or (sources, targets) pairs when directed.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    gather = [e[0] if directed else e for e in edges]
    scatter = [e[1] if directed else e for e in edges]
    incident = [[j for j, e in enumerate(scatter) if v in e] for v in range(node_count)]

    layers_out = [x]
    cur = x
    for _ in range(layers):
        msgs = []
        for members in gather:
            acc = np.zeros(d)
            for v in members:
                acc += cur[v]
            msgs.append(acc / len(members))
        nxt = np.empty_like(cur)
        for v in range(node_count):
            if not incident[v]:
                nxt[v] = cur[v]
                continue
            acc = np.zeros(d)
            for j in incident[v]:
                acc += msgs[j]
            nxt[v] = acc / len(incident[v])
        layers_out.append(nxt)
        cur = nxt

    total = np.zeros_like(x)
    prev = np.zeros_like(x)
    for v in layers_out:
        total += v + prev
        prev = v
    return total / (layers + 1)


def info_nce_oracle(a, b, tau):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    total = 0.0
    for i in range(n):
        sims = []
        for j in range(n):
            na = max(np.linalg.norm(a[i]), 1e-12)
            nb = max(np.linalg.norm(b[j]), 1e-12)
            sims.append(float(a[i] @ b[j]) / (na * nb) / tau)
        total += -math.log(math.exp(sims[i]) / sum(math.exp(s) for s in sims))
    return total / n


def cross_entropy_oracle(scores, targets):
    total = 0.0
    for row, t in zip(np.asarray(scores, dtype=float), targets):
        z = sum(math.exp(s) for s in row)
        total += -math.log(math.exp(row[t]) / z)
    return total / len(targets)


def rank_oracle(scores, target):
    """1-based rank of ``target`` with ties broken by the lower index."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order.index(target) + 1


def cosine(u, v):
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


def best_bipartition(sim, items):
    """Exhaustive two-way split of ``items`` maximising total within-group similarity.

    Equivalent to minimising the similarity cut between the groups (two-way
    correlation clustering). Both groups must be nonempty. Returns the
    grouping as a frozenset of two frozensets.
    """
    best, best_score = None, -math.inf
    items = list(items)
    for r in range(1, len(items)):
        for group in itertools.combinations(items, r):
            a = set(group)
            b = set(items) - a
            pairs = list(itertools.combinations(sorted(a), 2)) + list(itertools.combinations(sorted(b), 2))
            score = sum(sim[i][j] for i, j in pairs)
            if score > best_score + 1e-12:
                best, best_score = frozenset([frozenset(a), frozenset(b)]), score
    return best
