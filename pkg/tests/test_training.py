import math

import numpy as np
import pytest

from spandet import tensor as T
from spandet.data import SynthSpec, synth_generate, synthetic_provider
from spandet.geometry import Interval
from spandet.model import LayerPrediction, ModelConfig, ModelOutput
from spandet.nn import module_grad_check
from spandet.training import (AdamW, LossWeights, TrainConfig, clip_grad_norm,
                              composite_loss, cosine_lr, detection_loss,
                              focal_loss, focal_loss_mean, make_denoising, train)

CFG = ModelConfig(d_model=16, hidden=16, heads=4, ffn_mult=2, enc_layers=1,
                  dec_layers=1, num_queries=3, max_tokens=64,
                  dn_groups=2, dn_center_noise=0.4, dn_width_noise=0.4)


# -- focal loss ----------------------------------------------------------------


def test_focal_reduces_to_cross_entropy_at_gamma_zero():
    # p = 0.5 -> 0.5 * ln 2
    assert abs(focal_loss(0.0, 1, alpha=0.5, gamma=0.0) - 0.5 * math.log(2)) < 1e-12


def test_focal_zero_at_certain_correct():
    big = 50.0
    assert focal_loss(big, 1) < 1e-10
    assert focal_loss(-big, 0) < 1e-10


def test_focal_hand_value():
    logit = math.log(0.9 / 0.1)
    want = 0.25 * 0.01 * (-math.log(0.9))
    assert abs(focal_loss(logit, 1, alpha=0.25, gamma=2.0) - want) < 1e-9


def test_focal_validates_parameters():
    with pytest.raises(ValueError):
        focal_loss(0.0, 1, alpha=1.5)
    with pytest.raises(ValueError):
        focal_loss(0.0, 1, gamma=-1.0)


def test_focal_gradient():
    rng = np.random.default_rng(0)
    tg = np.array([1.0, 0.0, 1.0, 0.0])
    err = T.grad_check(lambda t: focal_loss_mean(t, tg),
                       T.Tensor(rng.normal(size=4)), 1e-5)
    assert err < 1e-4


# -- denoising batches ----------------------------------------------------------


def test_denoising_zero_noise_reproduces_targets():
    cfg = ModelConfig(**{**vars(CFG), "dn_center_noise": 0.0, "dn_width_noise": 0.0})
    gts = [Interval(0.3, 0.2), Interval(0.75, 0.3)]
    dnb = make_denoising(gts, cfg, np.random.default_rng(0))
    assert np.allclose(dnb.anchors, [[0.3, 0.2], [0.75, 0.3]] * 2, atol=1e-12)


def test_denoising_counts_and_target_map():
    cfg = ModelConfig(**{**vars(CFG), "dn_groups": 2})
    gts = [Interval(0.2, 0.1), Interval(0.5, 0.2), Interval(0.85, 0.25)]
    dnb = make_denoising(gts, cfg, np.random.default_rng(1))
    assert dnb.anchors.shape == (6, 2)
    assert dnb.gt_index.tolist() == [0, 1, 2, 0, 1, 2]
    assert dnb.n_groups == 2


def test_denoising_always_valid_intervals():
    gts = [Interval(0.05, 0.1), Interval(0.95, 0.1)]
    for seed in range(50):
        dnb = make_denoising(gts, CFG, np.random.default_rng(seed))
        for c, w in dnb.anchors:
            Interval(c, w)  # validates
            assert c - w / 2 >= -1e-12 and c + w / 2 <= 1 + 1e-12


def test_denoising_empty_cases():
    assert make_denoising([], CFG, np.random.default_rng(0)) is None
    no_dn = ModelConfig(**{**vars(CFG), "dn_groups": 0})
    assert make_denoising([Interval(0.5, 0.2)], no_dn, np.random.default_rng(0)) is None


# -- composite objective ---------------------------------------------------------


from oracles import random_instance, reference_objective


def test_composite_matches_independent_reference():
    lw = LossWeights()
    for seed in range(50):
        cw, logits, dn, dn_idx, gts = random_instance(seed)
        layer = LayerPrediction(T.Tensor(cw), T.Tensor(logits))
        dn_t = T.Tensor(dn) if dn is not None else None
        total, _ = composite_loss(layer, dn_t, dn_idx, gts, lw)
        want = reference_objective([tuple(r) for r in cw], list(logits),
                                   [tuple(r) for r in dn] if dn is not None else None,
                                   dn_idx, [(g.c, g.w) for g in gts], lw)
        assert abs(float(total.data) - want) < 1e-9, f"seed {seed}"


def test_composite_perfect_prediction_hits_focal_floor():
    gts = [Interval(0.3, 0.2), Interval(0.7, 0.2)]
    cw = np.array([[0.3, 0.2], [0.7, 0.2], [0.5, 0.1]])
    logits = np.array([40.0, 40.0, -40.0])     # matched certain, unmatched zero
    layer = LayerPrediction(T.Tensor(cw), T.Tensor(logits))
    total, terms = composite_loss(layer, None, None, gts)
    assert terms["span"] == 0.0
    assert abs(terms["giou"]) < 1e-12
    assert float(total.data) < 1e-8


def test_composite_no_targets_only_background_focal():
    cw = np.array([[0.4, 0.2]])
    logits = np.array([0.7])
    layer = LayerPrediction(T.Tensor(cw), T.Tensor(logits))
    total, terms = composite_loss(layer, None, None, [])
    assert terms["span"] == 0.0 and terms["giou"] == 0.0
    assert terms["dn_span"] == 0.0 and terms["dn_giou"] == 0.0
    want = focal_loss(0.7, 0)
    assert abs(terms["focal"] - want) < 1e-12
    assert abs(float(total.data) - 4.0 * want) < 1e-12


def test_objective_linear_in_weights():
    cw, logits, dn, dn_idx, gts = random_instance(99)
    layer = LayerPrediction(T.Tensor(cw), T.Tensor(logits))
    base, _ = composite_loss(layer, T.Tensor(dn), dn_idx, gts, LossWeights())
    doubled, _ = composite_loss(LayerPrediction(T.Tensor(cw), T.Tensor(logits)),
                                T.Tensor(dn), dn_idx, gts,
                                LossWeights(20.0, 2.0, 8.0, 18.0, 6.0))
    assert abs(float(doubled.data) - 2 * float(base.data)) < 1e-9


def test_removing_dn_leaves_learnable_terms_unchanged():
    cw, logits, dn, dn_idx, gts = random_instance(17)
    with_dn = composite_loss(LayerPrediction(T.Tensor(cw), T.Tensor(logits)),
                             T.Tensor(dn), dn_idx, gts)[1]
    without = composite_loss(LayerPrediction(T.Tensor(cw), T.Tensor(logits)),
                             None, None, gts)[1]
    for key in ("span", "giou", "focal"):
        assert with_dn[key] == without[key]


def test_composite_gradient_on_two_query_instance():
    cw, logits, _, _, gts = random_instance(23, n=2, m=1, with_dn=False)

    class Holder:
        pass

    holder = Holder()
    holder_params = {"cw": T.Tensor(cw, requires_grad=True),
                     "logits": T.Tensor(logits, requires_grad=True)}

    def build_loss():
        layer = LayerPrediction(holder_params["cw"], holder_params["logits"])
        return composite_loss(layer, None, None, gts)[0]

    # reuse the module checker through a minimal duck-typed module
    holder.parameters = lambda: holder_params
    holder.zero_grad = lambda: [p.zero_grad() for p in holder_params.values()]
    assert module_grad_check(holder, build_loss, 1e-5) < 1e-4


def test_weights_validated():
    with pytest.raises(ValueError):
        LossWeights(span=-1.0)


# -- optimizer and schedule -----------------------------------------------------


def test_adamw_zero_gradient_zero_decay_is_noop():
    p = T.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    opt = AdamW({"p": p}, lr=0.1)
    opt.step()
    assert np.array_equal(p.data, [1.0, -2.0])


def test_adamw_first_step_magnitude_is_lr():
    p = T.Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.array([3.7])
    opt = AdamW({"p": p}, lr=0.01)
    opt.step()
    assert abs(abs(p.data[0]) - 0.01) < 1e-6   # bias-corrected sign step
    assert p.data[0] < 0


def test_adamw_decoupled_decay():
    p = T.Tensor(np.array([2.0]), requires_grad=True)
    p.grad = np.array([0.0])
    opt = AdamW({"p": p}, lr=0.1, weight_decay=0.5)
    opt.step()
    assert abs(p.data[0] - 2.0 * (1 - 0.1 * 0.5)) < 1e-12


def test_clip_grad_norm():
    p = T.Tensor(np.array([0.0, 0.0]), requires_grad=True)
    p.grad = np.array([3.0, 4.0])
    total = clip_grad_norm({"p": p}, 0.1)
    assert abs(total - 5.0) < 1e-12
    assert abs(np.linalg.norm(p.grad) - 0.1) < 1e-12


def test_cosine_schedule_milestones():
    assert cosine_lr(100, 1000, 1e-3, warmup_steps=100) == 1e-3
    assert cosine_lr(1000, 1000, 1e-3, warmup_steps=100) < 1e-18
    mid = cosine_lr(550, 1000, 1e-3, warmup_steps=100)
    assert abs(mid - 5e-4) < 1e-12
    assert cosine_lr(50, 1000, 1e-3, warmup_steps=100) == 0.5e-3
    with pytest.raises(ValueError):
        cosine_lr(1001, 1000, 1e-3)


# -- training loop ---------------------------------------------------------------


def small_corpus(sigma=5.0, n=60, seed=3):
    spec = SynthSpec(n_texts=n, style="roft", n_sentences=4,
                     words_per_sentence=(2, 4), signal=sigma, embed_dim=16)
    split = synth_generate(spec, seed=seed)
    return split, synthetic_provider(split.meta)


SMALL_MODEL = dict(d_model=16, hidden=16, heads=4, ffn_mult=2, enc_layers=1,
                   dec_layers=1, num_queries=1, max_tokens=48, dn_groups=2)


def test_training_loss_decreases():
    split, prov = small_corpus()
    cfg = ModelConfig(**SMALL_MODEL)
    res = train(split, prov, cfg, TrainConfig(epochs=5, batch_size=8, lr=1e-3, seed=0))
    assert res.log[4]["train"]["total"] < res.log[0]["train"]["total"]


def test_training_deterministic():
    split, prov = small_corpus(n=24)
    cfg = ModelConfig(**SMALL_MODEL)
    tcfg = TrainConfig(epochs=2, batch_size=8, lr=1e-3, seed=42)
    r1 = train(split, prov, cfg, tcfg)
    r2 = train(split, prov, cfg, tcfg)
    assert r1.log == r2.log
    s1, s2 = r1.model.state(), r2.model.state()
    assert all(np.array_equal(s1[k], s2[k]) for k in s1)


def test_training_rejects_empty_dataset():
    split, prov = small_corpus(n=10)
    split.train = []
    with pytest.raises(ValueError, match="empty"):
        train(split, prov, ModelConfig(**SMALL_MODEL), TrainConfig(epochs=1))


def test_training_run_directory(tmp_path):
    split, prov = small_corpus(n=24)
    run = tmp_path / "run"
    res = train(split, prov, ModelConfig(**SMALL_MODEL),
                TrainConfig(epochs=2, batch_size=8, seed=1), run_dir=run)
    assert (run / "config.json").exists()
    assert (run / "best.npz").exists() and (run / "last.npz").exists()
    lines = (run / "metrics.jsonl").read_text().strip().split("\n")
    assert len(lines) == 2
    assert res.best_epoch in (1, 2)


def test_detection_loss_sums_layers():
    cw, logits, _, _, gts = random_instance(31, n=2, m=1, with_dn=False)
    layer = LayerPrediction(T.Tensor(cw), T.Tensor(logits))
    out1 = ModelOutput([layer], [], None)
    layer_a = LayerPrediction(T.Tensor(cw), T.Tensor(logits))
    layer_b = LayerPrediction(T.Tensor(cw), T.Tensor(logits))
    out2 = ModelOutput([layer_a, layer_b], [], None)
    one, _ = detection_loss(out1, gts)
    two, _ = detection_loss(out2, gts)
    assert abs(float(two.data) - 2 * float(one.data)) < 1e-12
