"""Brute-force reference implementations used as test oracles.

Nothing here calls into the package's numerical code; models are read only
through their public weight containers.
"""

import itertools
import math

import numpy as np

from edgegraft.model import MrfModel, VariableSpec


def energy(model, x):
    e = sum(model.node_weights[i][x[i]] for i in range(model.n))
    for (i, j), w in model.edge_weights.items():
        e += w[x[i], x[j]]
    return e


def joint_table(model):
    """All joint states with their probabilities, plus log Z."""
    states = list(itertools.product(*[range(s) for s in model.spec.cardinalities]))
    energies = np.array([energy(model, x) for x in states])
    m = energies.max()
    log_z = m + math.log(np.exp(energies - m).sum())
    return states, np.exp(energies - log_z), log_z


def marginals(model):
    states, p, log_z = joint_table(model)
    card = model.spec.cardinalities
    nodes = [np.zeros(s) for s in card]
    pairs = {e: np.zeros((card[e[0]], card[e[1]])) for e in model.edge_weights}
    for x, px in zip(states, p):
        for i in range(model.n):
            nodes[i][x[i]] += px
        for (i, j) in pairs:
            pairs[(i, j)][x[i], x[j]] += px
    return nodes, pairs, log_z


def pair_marginal(model, i, j):
    states, p, _ = joint_table(model)
    out = np.zeros((model.spec.cardinalities[i], model.spec.cardinalities[j]))
    for x, px in zip(states, p):
        out[x[i], x[j]] += px
    return out


def nll(model, rows):
    _, _, log_z = joint_table(model)
    return float(np.mean([log_z - energy(model, x) for x in rows]))


def nlpl(model, rows):
    """Direct double sum of negative log conditionals."""
    total = 0.0
    for x in rows:
        for i in range(model.n):
            logits = []
            for a in range(model.spec.cardinalities[i]):
                y = list(x)
                y[i] = a
                logits.append(energy(model, y))
            logits = np.array(logits)
            total -= logits[x[i]] - (logits.max() + math.log(np.exp(logits - logits.max()).sum()))
    return total / len(rows)


def random_tree(rng, n):
    return {tuple(sorted((int(rng.integers(v)), v))) for v in range(1, n)}


def random_model(rng, card, edges, scale=1.0):
    spec = VariableSpec(tuple(f"v{i}" for i in range(len(card))), tuple(card))
    nodes = [rng.normal(0, scale, size=s) for s in card]
    weights = {e: rng.normal(0, scale, size=(card[e[0]], card[e[1]])) for e in edges}
    return MrfModel(spec, nodes, weights)


def sample_rows(model, count, rng):
    states, p, _ = joint_table(model)
    idx = rng.choice(len(states), size=count, p=p / p.sum())
    return np.array([states[k] for k in idx], dtype=np.int64)
