import numpy as np
import pytest

import promptseg.autodiff as ad
from promptseg.autodiff import Tape, Tensor
from promptseg.errors import ShapeError, UnknownConditionError
from promptseg.network import (
    LOG_SCALE_INIT,
    PTv3Lite,
    PTv3LiteConfig,
    patch_boundaries,
)

from conftest import unique_voxel_coords

CONDS = ("car", "alice", "spot")


def small_model(alignment="DA", dtype=np.float32, seed=0, alias=False,
                table=None, **cfg_kwargs):
    defaults = dict(stage_channels=(8, 16), stage_depths=(1, 1), num_heads=2,
                    patch_size=8, voxel_size=0.1)
    defaults.update(cfg_kwargs)
    cfg = PTv3LiteConfig(**defaults)
    rows = table
    if alignment == "LA" and rows is None:
        rows = np.eye(7, 16)
    return PTv3Lite(cfg, CONDS, 7, alignment, class_embeddings=rows,
                    seed=seed, dtype=dtype, alias_conditions=alias)


def random_scan(rng, n=60):
    return unique_voxel_coords(rng, n), rng.uniform(0, 1, n)


# -- config validation ----------------------------------------------------------

def test_config_rejects_bad_combinations():
    with pytest.raises(ValueError):
        PTv3LiteConfig(stage_channels=(8,), stage_depths=(1, 1))
    with pytest.raises(ValueError):
        PTv3LiteConfig(stage_channels=(9,), num_heads=2)
    with pytest.raises(ValueError):
        PTv3LiteConfig(curve="zigzag")
    with pytest.raises(ValueError):
        PTv3LiteConfig(patch_size=0)
    with pytest.raises(ValueError):
        PTv3LiteConfig(pool_stride=3)
    with pytest.raises(ValueError):
        PTv3LiteConfig(input_channels=3)


def test_patch_boundaries_cover_short_tail():
    assert patch_boundaries(10, 4).tolist() == [0, 4, 8, 10]
    assert patch_boundaries(8, 4).tolist() == [0, 4, 8]
    assert patch_boundaries(3, 4).tolist() == [0, 3]
    assert patch_boundaries(1, 1).tolist() == [0, 1]


# -- prompted norm -----------------------------------------------------------------

def test_prompted_norm_identity_affine_passes_through():
    model = small_model()
    c = 8
    gamma = model.params["backbone.stage0.block0.norm1.gamma.car"]
    beta = model.params["backbone.stage0.block0.norm1.beta.car"]
    gamma.data = np.ones(c, dtype=np.float32)
    beta.data = np.zeros(c, dtype=np.float32)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, c))
    x = (x - x.mean(axis=1, keepdims=True)) / x.std(axis=1, keepdims=True)
    out = model._prompted_norm(Tensor(x.astype(np.float32)),
                               "backbone.stage0.block0.norm1", "car")
    assert np.allclose(out.data, x, atol=1e-3)  # eps shifts the scale slightly


def test_prompted_norm_identical_affines_identical_outputs():
    model = small_model()
    prefix = "backbone.stage0.block0.norm1"
    for field in ("gamma", "beta"):
        model.params[f"{prefix}.{field}.alice"].data = \
            model.params[f"{prefix}.{field}.car"].data.copy()
    x = Tensor(np.random.default_rng(1).standard_normal((6, 8)).astype(np.float32))
    out_car = model._prompted_norm(x, prefix, "car")
    out_alice = model._prompted_norm(x, prefix, "alice")
    assert (out_car.data == out_alice.data).all()


def test_prompted_norm_distinct_gamma_distinct_outputs_same_core():
    model = small_model()
    prefix = "backbone.stage0.block0.norm1"
    x_np = np.random.default_rng(2).standard_normal((6, 8)).astype(np.float32)
    out_car = model._prompted_norm(Tensor(x_np), prefix, "car")
    out_spot = model._prompted_norm(Tensor(x_np), prefix, "spot")
    assert not np.allclose(out_car.data, out_spot.data)
    # The normalized core is condition-independent: undo each affine and compare.
    for cond, out in (("car", out_car), ("spot", out_spot)):
        gamma = model.params[f"{prefix}.gamma.{cond}"].data
        beta = model.params[f"{prefix}.beta.{cond}"].data
        core = (out.data - beta) / gamma
        if cond == "car":
            car_core = core
    assert np.allclose(core, car_core, atol=1e-5)


# -- encoder ------------------------------------------------------------------------

def test_single_point_scan_shape_and_finite():
    model = small_model()
    feats = model.backbone_features(np.array([[0.5, 0.5, 0.5]]),
                                    np.array([0.3]), "car")
    assert feats.shape == (1, 8)
    assert np.isfinite(feats.data).all()


def test_output_always_n_by_7_from_either_head(rng):
    for alignment in ("DA", "LA"):
        model = small_model(alignment)
        for n in (1, 5, 33):
            coords, inten = random_scan(rng, n)
            logits = model.forward(coords, inten, "spot")
            assert logits.shape == (n, 7)


def test_permutation_equivariance(rng):
    model = small_model()
    coords, inten = random_scan(rng, 80)
    base = model.forward(coords, inten, "car").data
    perm = rng.permutation(80)
    permuted = model.forward(coords[perm], inten[perm], "car").data
    assert np.allclose(permuted, base[perm], atol=1e-5)


def test_conditions_with_fresh_affines_differ(rng):
    model = small_model()
    coords, inten = random_scan(rng, 50)
    out_car = model.forward(coords, inten, "car").data
    out_spot = model.forward(coords, inten, "spot").data
    assert not np.allclose(out_car, out_spot)


def test_unknown_condition_raises(rng):
    model = small_model()
    coords, inten = random_scan(rng, 10)
    with pytest.raises(UnknownConditionError):
        model.forward(coords, inten, "submarine")


def test_alias_conditions_share_everything(rng):
    model = small_model(alias=True)
    assert not any(".car" in n for n in model.params)
    assert any(".shared" in n for n in model.params)
    coords, inten = random_scan(rng, 40)
    out_car = model.forward(coords, inten, "car").data
    out_made_up = model.forward(coords, inten, "anything").data
    assert (out_car == out_made_up).all()


def test_bad_input_shapes_rejected():
    model = small_model()
    with pytest.raises(ShapeError):
        model.forward(np.zeros((4, 2)), np.zeros(4), "car")
    with pytest.raises(ShapeError):
        model.forward(np.zeros((4, 3)), np.zeros(5), "car")


# -- heads --------------------------------------------------------------------------

def test_language_head_matches_table_row(rng):
    model = small_model("LA")
    w = model.params["head.language.proj.weight"]
    b = model.params["head.language.proj.bias"]
    w.data = np.zeros_like(w.data)
    b.data = np.eye(7, 16)[3].astype(np.float32)  # projection = table row 3
    feats = Tensor(rng.standard_normal((5, 8)).astype(np.float32))
    logits = model.logits(feats, "car")
    assert (np.argmax(logits.data, axis=1) == 3).all()
    scale = float(np.exp(model.params["head.language.log_scale"].data))
    assert np.allclose(logits.data[:, 3], scale, atol=1e-4)


def test_language_head_logits_bounded_by_scale(rng):
    model = small_model("LA")
    coords, inten = random_scan(rng, 30)
    logits = model.forward(coords, inten, "alice").data
    scale = float(np.exp(model.params["head.language.log_scale"].data))
    assert (np.abs(logits) <= scale + 1e-4).all()


def test_log_scale_initial_value():
    model = small_model("LA")
    assert np.isclose(float(model.params["head.language.log_scale"].data),
                      LOG_SCALE_INIT)
    assert np.isclose(np.exp(LOG_SCALE_INIT), 1.0 / 0.07, rtol=1e-6)


def test_language_head_survives_zero_feature():
    model = small_model("LA", dtype=np.float64)
    feats = Tensor(np.zeros((2, 8)))
    b = model.params["head.language.proj.bias"]
    b.data = np.zeros_like(b.data)
    w = model.params["head.language.proj.weight"]
    w.data = np.zeros_like(w.data)
    logits = model.logits(feats, "car")  # zero projection, clamped norm
    assert np.isfinite(logits.data).all()


def test_decoupled_zero_head_zero_logits(rng):
    model = small_model()
    for suffix in ("weight", "bias"):
        p = model.params[f"head.decoupled.car.{suffix}"]
        p.data = np.zeros_like(p.data)
    feats = Tensor(rng.standard_normal((4, 8)).astype(np.float32))
    assert (model.logits(feats, "car").data == 0).all()


def test_decoupled_heads_differ_between_conditions(rng):
    model = small_model()
    feats = Tensor(rng.standard_normal((4, 8)).astype(np.float32))
    a = model.logits(feats, "car").data
    b = model.logits(feats, "alice").data
    assert not np.allclose(a, b)


def test_decoupled_other_condition_grads_none(rng):
    model = small_model(dtype=np.float64)
    coords, inten = random_scan(rng, 40)
    with Tape() as tape:
        logits = model.forward(coords, inten, "car")
        tape.backward(ad.tmean(ad.mul(logits, logits)))
    for name, p in model.params.items():
        if ".alice" in name or ".spot" in name:
            assert p.grad is None, name
        elif name.startswith("backbone.") and ".car" not in name:
            assert p.grad is not None and np.abs(p.grad).max() > 0, name


# -- state dict -----------------------------------------------------------------------

def test_state_dict_roundtrip_bit_exact(rng):
    model = small_model(seed=3)
    state = model.state_dict()
    other = small_model(seed=9)
    coords, inten = random_scan(rng, 30)
    before = other.forward(coords, inten, "car").data
    other.load_state_dict(state)
    after = other.forward(coords, inten, "car").data
    reference = model.forward(coords, inten, "car").data
    assert not np.allclose(before, reference)
    assert (after == reference).all()


def test_state_dict_mismatch_errors():
    model = small_model()
    state = model.state_dict()
    state.pop("backbone.embed.weight")
    with pytest.raises(ShapeError, match="missing"):
        model.load_state_dict(state)
    state = model.state_dict()
    state["extra.weight"] = np.zeros(3)
    with pytest.raises(ShapeError, match="extra"):
        model.load_state_dict(state)
    state = model.state_dict()
    state["backbone.embed.weight"] = np.zeros((2, 2))
    with pytest.raises(ShapeError, match="shape"):
        model.load_state_dict(state)


def test_la_requires_embeddings():
    with pytest.raises(ValueError):
        PTv3Lite(PTv3LiteConfig(stage_channels=(8,), stage_depths=(1,)),
                 CONDS, 7, "LA")
