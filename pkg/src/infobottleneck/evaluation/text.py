"""
Sequence metrics for token lists: WER, smoothed sentence BLEU and an
exact-match METEOR variant, plus a bag-of-tokens embedder.
"""

from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np

from ..errors import UndefinedWER

METEOR_ALPHA = 0.9
METEOR_GAMMA = 0.5
METEOR_BETA = 3.0


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insert, delete and substitute costs."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def wer(reference: Sequence, hypothesis: Sequence) -> float:
    if len(reference) == 0:
        raise UndefinedWER("empty reference")
    return edit_distance(reference, hypothesis) / len(reference)


def _ngrams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu(reference: Sequence, hypothesis: Sequence, max_order: int = 4) -> float:
    """Sentence BLEU with add-one smoothing on orders >= 2 and brevity penalty.

    Unigram precision is left unsmoothed, so a hypothesis sharing no token
    with the reference scores exactly 0. An empty hypothesis scores 0.
    """
    if len(reference) == 0:
        raise UndefinedWER("empty reference")
    c, r = len(hypothesis), len(reference)
    if c == 0:
        return 0.0
    logp = 0.0
    for n in range(1, max_order + 1):
        hyp, ref = _ngrams(hypothesis, n), _ngrams(reference, n)
        match = sum(min(v, ref[g]) for g, v in hyp.items())
        total = max(c - n + 1, 0)
        if n > 1:
            match, total = match + 1, total + 1
        if match == 0:
            return 0.0
        logp += np.log(match / total)
    bp = 1.0 if c > r else np.exp(1.0 - r / c)
    return float(bp * np.exp(logp / max_order))


def meteor_alignment(reference: Sequence, hypothesis: Sequence):
    """(matches, chunks) of a maximal monotone exact-match alignment.

    Among alignments with the most matches the one with the fewest chunks
    is taken. A chunk is a run of matches adjacent in both sequences.
    """
    R, H = len(reference), len(hypothesis)
    worst = (-1, 0)
    # best[i][j][m]: (matches, -chunks) over prefixes; m=1 if (i-1, j-1) matched
    best = [[[(0, 0), worst] for _ in range(H + 1)] for _ in range(R + 1)]
    for i in range(R + 1):
        for j in range(H + 1):
            if i == 0 and j == 0:
                continue
            cands = []
            if i > 0:
                cands.extend(best[i - 1][j])
            if j > 0:
                cands.extend(best[i][j - 1])
            best[i][j][0] = max(c for c in cands if c[0] >= 0)
            if i > 0 and j > 0 and reference[i - 1] == hypothesis[j - 1]:
                m0, m1 = best[i - 1][j - 1]
                opts = [(m0[0] + 1, m0[1] - 1)]
                if m1[0] >= 0:
                    opts.append((m1[0] + 1, m1[1]))
                best[i][j][1] = max(opts)
    m, neg_chunks = max(best[R][H])
    return m, -neg_chunks


def meteor_simplified(reference: Sequence, hypothesis: Sequence) -> float:
    """Exact-match unigram METEOR (no stemming or synonyms).

    F-mean = P R / (alpha P + (1 - alpha) R), alpha = 0.9, times the
    fragmentation penalty 1 - 0.5 (chunks / matches)^3.
    """
    if len(reference) == 0:
        raise UndefinedWER("empty reference")
    if len(hypothesis) == 0:
        return 0.0
    m, chunks = meteor_alignment(reference, hypothesis)
    if m == 0:
        return 0.0
    p, r = m / len(hypothesis), m / len(reference)
    fmean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    return float(fmean * (1.0 - METEOR_GAMMA * (chunks / m) ** METEOR_BETA))


class BagOfTokensEmbedder:
    """Mean of fixed seeded random token vectors; a sentence-embedding stand-in."""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim, self.seed = int(dim), int(seed)
        self._cache = {}

    @property
    def name(self):
        return f"bag-of-tokens(dim={self.dim}, seed={self.seed})"

    def token_vector(self, token) -> np.ndarray:
        v = self._cache.get(token)
        if v is None:
            # derive a per-token stream from its bytes so vectors do not
            # depend on which tokens were seen first
            key = [self.seed] + list(str(token).encode("utf-8"))
            v = np.random.default_rng(key).standard_normal(self.dim)
            self._cache[token] = v
        return v

    def __call__(self, texts) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, t in enumerate(texts):
            if len(t):
                out[i] = np.mean([self.token_vector(tok) for tok in t], axis=0)
        return out
