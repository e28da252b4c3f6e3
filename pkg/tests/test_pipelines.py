import itertools

import numpy as np
import pytest

from infobottleneck.data import StimulusSet
from infobottleneck.errors import ConfigError, NotFitted, ShapeError
from infobottleneck.evaluation import score_stimuli
from infobottleneck.evaluation.image import ssim
from infobottleneck.evaluation.representation import feature_matrix
from infobottleneck.evaluation.text import wer
from infobottleneck.pipelines import compute_ceiling, make_pipeline, pipeline_ids
from infobottleneck.pipelines.text import EncodingModelTextPipeline, NgramProposer
from infobottleneck.pipelines.vision import PcaPriorVisionPipeline
from infobottleneck.synthetic import SyntheticWorldConfig, generate_text_world, generate_vision_world


@pytest.fixture(scope="module")
def vision():
    ds, gt = generate_vision_world(SyntheticWorldConfig(num_examples=1500))
    train = ds.stimuli.subset(ds.splits.train)
    return ds, train, PcaPriorVisionPipeline().fit(train)


def _latents(p, stim):
    return {t.name: t.data for t in p.latent_targets(stim)}


def _ks(a, b):
    # two-sample Kolmogorov-Smirnov statistic from the empirical CDFs
    v = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), v, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), v, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


# ---------------------------------------------------------------- vision latents

def test_registry():
    assert pipeline_ids() == ["text-encoding", "vision-pca"]
    assert isinstance(make_pipeline("vision-pca", pca_k=4), PcaPriorVisionPipeline)
    with pytest.raises(ConfigError):
        make_pipeline("nope")


def test_mean_image_has_zero_coarse_latent(vision):
    _, train, p = vision
    mean = p.pca.mean.reshape(1, *p.image_shape)
    lat = _latents(p, StimulusSet("image", images=mean, class_labels=[0], num_classes=4))
    np.testing.assert_allclose(lat["coarse"], 0.0, atol=1e-5)


def test_mean_plus_two_components(vision):
    _, _, p = vision
    img = (p.pca.mean + 2.0 * p.pca.components[0]).reshape(1, *p.image_shape)
    lat = _latents(p, StimulusSet("image", images=img, class_labels=[1], num_classes=4))
    expected = np.zeros(p.pca.n_components)
    expected[0] = 2.0
    np.testing.assert_allclose(lat["coarse"][0], expected, atol=1e-4)


def test_same_class_same_semantic(vision):
    _, train, p = vision
    sem = _latents(p, train)["semantic"]
    labels = train.class_labels
    a, b = np.flatnonzero(labels == 2)[:2]
    np.testing.assert_array_equal(sem[a], sem[b])
    assert not np.allclose(sem[a], sem[np.flatnonzero(labels == 0)[0]])
    # centered one-hot projection: prototypes sum to zero
    np.testing.assert_allclose(p.prototypes.sum(axis=0), 0.0, atol=1e-12)


def test_unfitted_raises():
    with pytest.raises(NotFitted):
        PcaPriorVisionPipeline().latent_targets(StimulusSet("image", images=np.zeros((1, 16, 16))))
    with pytest.raises(NotFitted):
        EncodingModelTextPipeline(8).text_decode(np.zeros((2, 16)))


# ---------------------------------------------------------------- vision reconstruct

def test_true_latents_give_ceiling_images(vision):
    ds, _, p = vision
    te = ds.stimuli.subset(ds.splits.test)
    ceiling = compute_ceiling(p, ds)
    again = p.reconstruct(_latents(p, te))
    np.testing.assert_array_equal(again.images, ceiling.images)
    # round-trip law: twice gives identical output
    np.testing.assert_array_equal(p.reconstruct(_latents(p, te)).images, again.images)


def test_zero_latents_give_training_mean(vision):
    _, train, p = vision
    out = p.reconstruct({"coarse": np.zeros((2, p.pca.n_components)), "semantic": np.zeros((2, p.semantic_dim))})
    mean = np.clip(train.images.reshape(len(train), -1).mean(axis=0), 0, 1).reshape(p.image_shape)
    np.testing.assert_allclose(out.images[0], mean, atol=1e-5)
    np.testing.assert_array_equal(out.images[0], out.images[1])


def test_semantic_latent_adds_information(vision):
    # few coarse components leave class detail for the semantic head to supply
    ds, train, _ = vision
    p = PcaPriorVisionPipeline(pca_k=4).fit(train)
    te = ds.stimuli.subset(ds.splits.test)
    lat = _latents(p, te)
    both = p.reconstruct(lat)
    coarse_only = p.reconstruct({"coarse": lat["coarse"], "semantic": np.zeros_like(lat["semantic"])})
    r_both = np.mean(score_stimuli("pixel_correlation", both, te).per_example_scores)
    r_coarse = np.mean(score_stimuli("pixel_correlation", coarse_only, te).per_example_scores)
    assert r_coarse < r_both


def test_reconstruct_shape_errors(vision):
    _, _, p = vision
    with pytest.raises(ShapeError):
        p.reconstruct({"coarse": np.zeros((1, 3))})
    with pytest.raises(ShapeError):
        p.reconstruct({"coarse": np.zeros((1, p.pca.n_components)), "semantic": np.zeros((1, 2))})


def test_ceiling_lossless_when_pca_k_equals_rank():
    rng = np.random.default_rng(0)
    basis = rng.standard_normal((4, 16 * 16))
    coef = rng.uniform(-1, 1, (60, 4))
    images = (0.5 + 0.04 * coef @ basis).reshape(60, 16, 16)
    assert images.min() > 0 and images.max() < 1
    labels = np.arange(60) % 3
    stim = StimulusSet("image", images=images, class_labels=labels, num_classes=3)
    p = PcaPriorVisionPipeline(pca_k=4).fit(stim)
    rec = p.reconstruct(_latents(p, stim))
    r = score_stimuli("pixel_correlation", rec, stim).per_example_scores
    np.testing.assert_allclose(r, 1.0, atol=1e-4)


def test_ceiling_with_one_component_loses_information(vision):
    ds, train, _ = vision
    p = PcaPriorVisionPipeline(pca_k=1).fit(train)
    te = ds.stimuli.subset(ds.splits.test)
    ceiling = compute_ceiling(p, ds)
    assert np.mean([ssim(a, b) for a, b in zip(ceiling.images, te.images)]) < 1.0


# ---------------------------------------------------------------- prior samples

def test_prior_sample_empty(vision):
    _, _, p = vision
    assert len(p.prior_sample(0, 0)) == 0
    assert len(EncodingModelTextPipeline(8).fit(StimulusSet("text", texts=[["w000"]],
                                                            vocab=[f"w{i:03d}" for i in range(8)]))
               .prior_sample(0, 0)) == 0


def test_prior_sample_mean_matches_training_mean(vision):
    _, train, p = vision
    n = 500
    s = p.prior_sample(0, n).images.reshape(n, -1).astype(np.float64)
    x = train.images.reshape(len(train), -1).astype(np.float64)
    se = s.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(s.mean(axis=0) - x.mean(axis=0)) <= 3 * se + 1e-6)


def test_prior_sample_brightness_distribution(vision):
    _, train, p = vision
    fs = feature_matrix(p.prior_sample(1, 500).images)[:, 0]
    ft = feature_matrix(train.images)[:, 0]
    assert _ks(fs, ft) < 0.2


def test_prior_sample_deterministic(vision):
    _, _, p = vision
    np.testing.assert_array_equal(p.prior_sample(3, 5).images, p.prior_sample(3, 5).images)


def test_vision_save_load(vision, tmp_path):
    ds, _, p = vision
    p.save(tmp_path)
    q = PcaPriorVisionPipeline.load(tmp_path)
    te = ds.stimuli.subset(ds.splits.test)
    np.testing.assert_allclose(q.reconstruct(_latents(q, te)).images, p.reconstruct(_latents(p, te)).images,
                               atol=1e-5)


# ---------------------------------------------------------------- text

@pytest.fixture(scope="module")
def text8():
    cfg = SyntheticWorldConfig.default_text(vocab_size=8, sentence_length=5, num_examples=200, branching=3)
    ds, gt = generate_text_world(cfg)
    p = EncodingModelTextPipeline(ds.stimuli.vocab, hidden_dim=16, seed=0).fit(ds.stimuli)
    seqs = np.array(list(itertools.product(range(8), repeat=5)))
    return ds, gt, p, seqs, p.encode_ids(seqs)


def _exhaustive(all_hidden, h):
    scores = -np.sum((all_hidden - h) ** 2, axis=(1, 2))
    return int(np.argmax(scores)), float(scores.max())


def test_exact_recovery_matches_exhaustive_oracle(text8):
    ds, gt, p, seqs, H = text8
    for i in range(40):
        true = gt.latents[i].astype(int)
        h = p.encode_ids([true])[0]
        best, _ = _exhaustive(H, h)
        assert seqs[best].tolist() == true.tolist()
        ids, score = p.decode_ids(h, beam_width=2)
        assert ids == true.tolist() and abs(score) < 1e-12


def test_greedy_beam_never_beats_oracle(text8):
    ds, gt, p, seqs, H = text8
    rng = np.random.default_rng(0)
    equal = 0
    trials = 40
    for i in range(trials):
        h = p.encode_ids([gt.latents[i].astype(int)])[0] + rng.standard_normal((5, 16))
        _, oracle = _exhaustive(H, h)
        ids, score = p.decode_ids(h, beam_width=1)
        assert score <= oracle + 1e-9
        assert score == pytest.approx(p.sequence_score(ids, h))
        equal += abs(score - oracle) < 1e-9
    assert equal >= 0.6 * trials


def test_vocab50_spot_check():
    cfg = SyntheticWorldConfig.default_text(vocab_size=50, sentence_length=10, num_examples=300)
    ds, gt = generate_text_world(cfg)
    # proposer fitted on every sentence so all true bigrams are nominated
    p = EncodingModelTextPipeline(ds.stimuli.vocab, hidden_dim=16, seed=0).fit(ds.stimuli)
    for i in range(30):
        true = gt.latents[i].astype(int).tolist()
        assert p.decode_ids(p.encode_ids([true])[0])[0] == true


def test_noise_hidden_vectors_give_floor_wer():
    cfg = SyntheticWorldConfig.default_text(num_examples=300)
    ds, gt = generate_text_world(cfg)
    p = EncodingModelTextPipeline(ds.stimuli.vocab, hidden_dim=cfg.latent_dim, seed=0).fit(ds.stimuli)
    rng = np.random.default_rng(1)
    sd = float(gt.hidden_targets.std())
    scores = [wer(ds.stimuli.texts[i], p.text_decode(sd * rng.standard_normal((cfg.sentence_length, 16))))
              for i in range(100)]
    assert abs(np.mean(scores) - 1.0) <= 0.15


def test_decode_is_deterministic(text8):
    ds, gt, p, _, _ = text8
    h = np.random.default_rng(2).standard_normal((5, 16))
    assert p.text_decode(h) == p.text_decode(h)
    with pytest.raises(ShapeError):
        p.text_decode(np.zeros((5, 3)))


def test_proposer_is_a_distribution(text8):
    _, _, p, _, _ = text8
    prop = p.proposer
    for ctx in list(prop.counts) + [(7,), (-1,)]:
        prefix = [c for c in ctx if c >= 0]
        assert abs(prop.probs(prefix).sum() - 1.0) < 1e-9
    unseen = NgramProposer(5, order=3).fit([[0, 1, 2]])
    assert abs(unseen.probs([4, 4]).sum() - 1.0) < 1e-9
    with pytest.raises(ConfigError):
        NgramProposer(0)
    with pytest.raises(ConfigError):
        EncodingModelTextPipeline([])


def test_text_ceiling_and_labels(text8):
    ds, _, p, _, _ = text8
    ceiling = compute_ceiling(p, ds)
    te = ds.stimuli.subset(ds.splits.test)
    assert ceiling.texts == te.texts
    assert p.ceiling_label == "surrogate ceiling"


def test_text_save_load(text8, tmp_path):
    ds, _, p, _, _ = text8
    p.save(tmp_path)
    q = EncodingModelTextPipeline.load(tmp_path)
    h = np.random.default_rng(3).standard_normal((5, 16))
    assert q.text_decode(h) == p.text_decode(h)
    assert q.prior_sample(0, 4).texts == p.prior_sample(0, 4).texts
