"""
Text surrogate: decoding sentences through a bottleneck
=======================================================

The encoding model maps word ids to hidden vectors; recordings are a noisy
linear mix of those. Decoding is beam search scored by the encoding model.
"""

#%%
import numpy as np

from infobottleneck.evaluation.text import wer
from infobottleneck.pipelines import EncodingModelTextPipeline
from infobottleneck.synthetic import SyntheticWorldConfig, generate_text_world

cfg = SyntheticWorldConfig.default_text(num_examples=300)
ds, gt = generate_text_world(cfg)
pipe = EncodingModelTextPipeline(ds.stimuli.vocab, hidden_dim=cfg.latent_dim, seed=cfg.seed).fit(ds.stimuli)
print(ds.stimuli.texts[:3])

#%%
# decoding the true hidden vectors recovers the sentence
true_ids = gt.latents[0].astype(int).tolist()
print(pipe.decode_ids(pipe.encode_ids([true_ids])[0])[0] == true_ids)

#%%
# noise in place of hidden vectors: the prior alone, WER near 1
rng = np.random.default_rng(0)
sd = float(gt.hidden_targets.std())
guesses = [pipe.text_decode(sd * rng.standard_normal((cfg.sentence_length, cfg.latent_dim))) for _ in range(20)]
print(np.mean([wer(t, g) for t, g in zip(ds.stimuli.texts, guesses)]))
