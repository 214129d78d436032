"""Shared test utilities: independent oracles and data generators.

The oracles here deliberately avoid the production code paths they check:
Parseval counts come from an all-pairs matcher, CRF quantities from explicit
path enumeration, decoder optima from enumerating every binary tree, and
gradients from central finite differences.
"""

from __future__ import annotations

import itertools
import math
import random
from typing import Iterator, Sequence

import numpy as np

from rstkit.core import (
    Constituent,
    DocumentRecord,
    EduSpan,
    RelationLabel,
    RstTree,
    Token,
)
from rstkit.crf import CrfModel, log_likelihood

TEST_LABELS = (
    "attribution_SN",
    "condition_SN",
    "elaboration_NS",
    "joint_NN",
    "sequence_NN",
)


# ---------------------------------------------------------------------------
# Random structures
# ---------------------------------------------------------------------------


def random_tree(
    rng: random.Random, n: int, labels: Sequence[str] = TEST_LABELS
) -> RstTree:
    def build(start: int, end: int) -> RstTree:
        if end - start == 1:
            return RstTree.leaf(start)
        split = rng.randint(start + 1, end - 1)
        label = RelationLabel.from_merged(rng.choice(labels))
        return RstTree.internal(build(start, split), build(split, end), label)

    return build(0, n)


def random_edus(
    rng: random.Random, n: int, max_tokens: int = 3
) -> tuple[EduSpan, ...]:
    spans = []
    pos = 0
    for _ in range(n):
        length = rng.randint(1, max_tokens)
        spans.append(EduSpan(pos, pos + length - 1))
        pos += length
    return tuple(spans)


def make_document(
    doc_id: str,
    tree: RstTree,
    edus: Sequence[EduSpan] | None = None,
    genre: str = "test",
    lang: str = "en",
    split: str = "train",
    sents: Sequence[int] | None = None,
) -> DocumentRecord:
    """Wrap a tree in a document with synthetic token texts."""
    n = tree.n_leaves
    if edus is None:
        edus = tuple(EduSpan(i, i) for i in range(n))
    n_tokens = edus[-1].last_token + 1
    tokens = tuple(Token(f"w{i}", 3 * i, i) for i in range(n_tokens))
    return DocumentRecord(
        doc_id=doc_id,
        genre=genre,
        lang=lang,
        tokens=tokens,
        edus=tuple(edus),
        tree=tree,
        sentence_boundaries=tuple(sents) if sents is not None else None,
        split=split,
    )


# ---------------------------------------------------------------------------
# Parseval oracle: O(n^2) all-pairs matching with used flags
# ---------------------------------------------------------------------------


def brute_force_parseval(
    gold: Sequence[Constituent], pred: Sequence[Constituent]
) -> dict[str, int]:
    def count(match) -> int:
        used = [False] * len(gold)
        matched = 0
        for p in pred:
            for i, g in enumerate(gold):
                if not used[i] and match(g, p):
                    used[i] = True
                    matched += 1
                    break
        return matched

    return {
        "S": count(lambda g, p: g.span == p.span),
        "N": count(lambda g, p: g.span == p.span and g.role == p.role),
        "R": count(lambda g, p: g.span == p.span and g.relation == p.relation),
        "Full": count(
            lambda g, p: g.span == p.span
            and g.role == p.role
            and g.relation == p.relation
        ),
    }


# ---------------------------------------------------------------------------
# CRF oracles: explicit path enumeration and finite differences
# ---------------------------------------------------------------------------


def enumerate_paths(
    model: CrfModel, features: np.ndarray
) -> list[tuple[tuple[int, ...], float]]:
    emissions = np.asarray(features, dtype=float) @ model.emission.T
    seq_len = emissions.shape[0]
    scored = []
    for path in itertools.product(range(model.num_labels), repeat=seq_len):
        score = float(model.start[path[0]] + emissions[0, path[0]])
        for t in range(1, seq_len):
            score += float(
                model.transition[path[t - 1], path[t]] + emissions[t, path[t]]
            )
        score += float(model.stop[path[-1]])
        scored.append((path, score))
    return scored


def brute_force_log_z(model: CrfModel, features: np.ndarray) -> float:
    scores = [s for _, s in enumerate_paths(model, features)]
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))


def finite_difference_grads(
    model: CrfModel,
    features: np.ndarray,
    gold: Sequence[str],
    h: float = 1e-5,
) -> dict[str, np.ndarray]:
    def value(m: CrfModel) -> float:
        return log_likelihood(m, features, gold)[0]

    grads = {}
    for name in ("emission", "transition", "start", "stop"):
        arr = getattr(model, name)
        grad = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            plus = model.clone()
            getattr(plus, name)[idx] += h
            minus = model.clone()
            getattr(minus, name)[idx] -= h
            grad[idx] = (value(plus) - value(minus)) / (2.0 * h)
            it.iternext()
        grads[name] = grad
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.abs(a) + np.abs(b), 1.0)
    return float(np.max(np.abs(a - b) / denom))


# ---------------------------------------------------------------------------
# Decoder oracle: enumerate every binary tree (argmax labels per node)
# ---------------------------------------------------------------------------


def enumerate_trees(
    start: int, end: int, provider, labels: Sequence[str]
) -> Iterator[RstTree]:
    if end - start == 1:
        yield RstTree.leaf(start)
        return
    for split in range(start + 1, end):
        scores = provider.label_scores((start, split), (split, end))
        label = RelationLabel.from_merged(labels[int(np.argmax(scores))])
        for left in enumerate_trees(start, split, provider, labels):
            for right in enumerate_trees(split, end, provider, labels):
                yield RstTree.internal(left, right, label)


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)
