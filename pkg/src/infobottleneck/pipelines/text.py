"""
Text reconstruction by encoding-model-scored beam search.

An n-gram proposer nominates the ``top_p`` most probable next words; each
extension is scored by how close the encoding map's prediction for the new
context comes to the step's hidden vector (negative squared distance). The
encoding map is linear in the mean embedding of the last ``context_window``
words.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..data import StimulusSet, load_arrays, save_arrays
from ..errors import ConfigError, NotFitted, ShapeError
from .base import LatentTarget, register

BOS = -1


class NgramProposer:
    """Add-k smoothed n-gram next-token distribution over ``vocab_size`` ids."""

    def __init__(self, vocab_size: int, order: int = 2, add_k: float = 0.01):
        if vocab_size < 1:
            raise ConfigError("empty vocabulary")
        if order < 1:
            raise ConfigError("order must be >= 1")
        self.vocab_size = vocab_size
        self.order = order
        self.add_k = add_k
        self.counts: Dict[Tuple[int, ...], np.ndarray] = {}

    def context(self, prefix: Sequence[int]) -> Tuple[int, ...]:
        n = self.order - 1
        if n == 0:
            return ()
        padded = [BOS] * n + list(prefix)
        return tuple(padded[-n:])

    def fit(self, sequences: Sequence[Sequence[int]]) -> "NgramProposer":
        counts = defaultdict(lambda: np.zeros(self.vocab_size))
        for seq in sequences:
            for t, tok in enumerate(seq):
                counts[self.context(seq[:t])][tok] += 1
        self.counts = dict(counts)
        return self

    def probs(self, prefix: Sequence[int]) -> np.ndarray:
        c = self.counts.get(self.context(prefix))
        V = self.vocab_size
        if c is None:
            return np.full(V, 1.0 / V)
        return (c + self.add_k) / (c.sum() + self.add_k * V)

    def top(self, prefix: Sequence[int], p: int) -> np.ndarray:
        """Ids of the ``p`` most probable next tokens; ties go to the lower id."""
        pr = self.probs(prefix)
        order = np.lexsort((np.arange(len(pr)), -pr))
        return order[:p]

    def sample(self, rng, length: int) -> List[int]:
        seq: List[int] = []
        for _ in range(length):
            seq.append(int(rng.choice(self.vocab_size, p=self.probs(seq))))
        return seq

    def log_prob(self, seq: Sequence[int]) -> float:
        return float(sum(np.log(self.probs(seq[:t])[tok]) for t, tok in enumerate(seq)))


@register("text-encoding")
class EncodingModelTextPipeline:
    kind = "text"
    ceiling_label = "surrogate ceiling"
    default_loss_weights = {"hidden": 1.0}
    default_trainer = {"batch_size": 512, "learning_rate": 5e-4}

    def __init__(self, vocab=50, embedding_dim: int = 16, hidden_dim: int = 16,
                 context_window: int = 3, order: int = 2, add_k: float = 0.01,
                 top_p: int = 8, beam_width: int = 4, seed: int = 0):
        if isinstance(vocab, int):
            from ..synthetic import vocabulary
            vocab = vocabulary(vocab)
        self.vocab = list(vocab)
        if not self.vocab:
            raise ConfigError("empty vocabulary")
        self.index = {t: i for i, t in enumerate(self.vocab)}
        self.embedding_dim = int(embedding_dim)
        self.hidden_dim = int(hidden_dim)
        self.context_window = int(context_window)
        self.top_p = int(top_p)
        self.beam_width = int(beam_width)
        self.seed = int(seed)
        rng = np.random.default_rng([self.seed, 0x7E57])
        V = len(self.vocab)
        self.embeddings = rng.standard_normal((V, self.embedding_dim))
        self.encoding = rng.standard_normal((self.embedding_dim, self.hidden_dim)) * np.sqrt(
            self.embedding_dim / self.hidden_dim)
        self.proposer = NgramProposer(V, order, add_k)
        self.sentence_length: Optional[int] = None
        self._fitted = False

    def params(self):
        return {"vocab": self.vocab, "embedding_dim": self.embedding_dim, "hidden_dim": self.hidden_dim,
                "context_window": self.context_window, "order": self.proposer.order,
                "add_k": self.proposer.add_k, "top_p": self.top_p, "beam_width": self.beam_width,
                "seed": self.seed}

    # ------------------------------------------------------------ encoding

    def ids(self, tokens: Sequence[str]) -> List[int]:
        return [self.index[t] for t in tokens]

    def context_embeddings(self, ids) -> np.ndarray:
        """Mean embedding of the trailing window at each position: (n, T, e)."""
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        n, T = ids.shape
        emb = self.embeddings[ids]
        csum = np.concatenate([np.zeros((n, 1, self.embedding_dim)), np.cumsum(emb, axis=1)], axis=1)
        out = np.empty_like(emb)
        for t in range(T):
            lo = max(0, t - self.context_window + 1)
            out[:, t] = (csum[:, t + 1] - csum[:, lo]) / (t + 1 - lo)
        return out

    def encode_ids(self, ids) -> np.ndarray:
        return self.context_embeddings(ids) @ self.encoding

    # ------------------------------------------------------------ interface

    def fit(self, stimuli: StimulusSet) -> "EncodingModelTextPipeline":
        if stimuli.kind != "text":
            raise ConfigError("text pipeline needs text stimuli")
        seqs = [self.ids(s) for s in stimuli.texts]
        lengths = {len(s) for s in seqs}
        if len(lengths) != 1:
            raise ShapeError("text pipeline expects equal-length sequences")
        self.sentence_length = lengths.pop()
        self.proposer.fit(seqs)
        self._fitted = True
        return self

    def _check(self):
        if not self._fitted:
            raise NotFitted("text pipeline must be fitted on training texts first")

    def latent_targets(self, stimuli: StimulusSet) -> List[LatentTarget]:
        ids = np.asarray([self.ids(s) for s in stimuli.texts], dtype=np.int64)
        h = self.encode_ids(ids)
        n, T, d = h.shape
        return [LatentTarget("hidden", h.reshape(n, T * d), steps=T)]

    def latent_dims(self) -> Dict[str, int]:
        return {"hidden": self.hidden_dim}

    def sequence_score(self, ids: Sequence[int], hidden_sequence) -> float:
        pred = self.encode_ids([list(ids)])[0]
        return -float(np.sum((pred - np.asarray(hidden_sequence)) ** 2))

    def text_decode(self, hidden_sequence, beam_width: Optional[int] = None,
                    top_p: Optional[int] = None) -> List[str]:
        """Beam search for the token sequence whose encoded contexts best match
        ``hidden_sequence`` (one row per step)."""
        ids, _ = self.decode_ids(hidden_sequence, beam_width, top_p)
        return [self.vocab[i] for i in ids]

    def decode_ids(self, hidden_sequence, beam_width=None, top_p=None) -> Tuple[List[int], float]:
        self._check()
        h = np.atleast_2d(np.asarray(hidden_sequence, dtype=np.float64))
        if h.shape[1] != self.hidden_dim:
            raise ShapeError(f"hidden vectors have {h.shape[1]} dims, expected {self.hidden_dim}")
        width = beam_width or self.beam_width
        p = top_p or self.top_p
        w = self.context_window
        beams: List[Tuple[float, Tuple[int, ...]]] = [(0.0, ())]
        for t in range(len(h)):
            cand_ids, cand_prev = [], []
            for b, (_, prefix) in enumerate(beams):
                for tok in self.proposer.top(prefix, p):
                    cand_ids.append(prefix + (int(tok),))
                    cand_prev.append(b)
            ctx = np.array([self.embeddings[list(c[-w:])].mean(axis=0) for c in cand_ids])
            pred = ctx @ self.encoding
            step_score = -np.sum((pred - h[t]) ** 2, axis=1)
            scores = np.array([beams[b][0] for b in cand_prev]) + step_score
            # stable: higher score first, then earlier candidate
            order = np.lexsort((np.arange(len(scores)), -scores))[:width]
            beams = [(float(scores[i]), cand_ids[i]) for i in order]
        best_score, best = beams[0]
        return list(best), best_score

    def reconstruct(self, latents: Dict[str, np.ndarray]) -> StimulusSet:
        self._check()
        h = np.atleast_2d(np.asarray(latents["hidden"], dtype=np.float64))
        if h.shape[1] % self.hidden_dim:
            raise ShapeError("hidden latent width is not a multiple of hidden_dim")
        steps = h.shape[1] // self.hidden_dim
        texts = [self.text_decode(row.reshape(steps, self.hidden_dim)) for row in h]
        return StimulusSet("text", texts=texts, vocab=self.vocab)

    def prior_sample(self, seed: int, n: int) -> StimulusSet:
        """Proposer samples with no encoding-model scoring."""
        self._check()
        rng = np.random.default_rng(seed)
        texts = [[self.vocab[i] for i in self.proposer.sample(rng, self.sentence_length)] for _ in range(n)]
        return StimulusSet("text", texts=texts, vocab=self.vocab)

    # ------------------------------------------------------------ persistence

    def save(self, directory):
        self._check()
        contexts = sorted(self.proposer.counts)
        counts = np.array([self.proposer.counts[c] for c in contexts]) if contexts else np.zeros((0, len(self.vocab)))
        meta = {"pipeline": self.pipeline_id, "params": self.params(),
                "contexts": [list(c) for c in contexts], "sentence_length": self.sentence_length}
        return save_arrays(directory, "pipeline", {"ngram_counts": counts}, meta)

    @classmethod
    def load(cls, directory) -> "EncodingModelTextPipeline":
        a, meta = load_arrays(directory, "pipeline")
        p = cls(**meta["params"])
        p.proposer.counts = {tuple(c): a["ngram_counts"][i].astype(np.float64)
                             for i, c in enumerate(meta["contexts"])}
        p.sentence_length = meta["sentence_length"]
        p._fitted = True
        return p
