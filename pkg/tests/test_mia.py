import numpy as np
import pytest

from embed_audit.core import roc_auc
from embed_audit.errors import InvalidArgument
from embed_audit.mia import (
    AttackDataset,
    attack_config,
    build_attack_features,
    run_mia,
    shadow_attack_with_labels,
    shadow_attack_with_pseudolabels,
)
from embed_audit.synthdata import gen_purchase_like, split_membership
from embed_audit.target import TargetModel


def _balanced(m, width, fill):
    y = np.r_[np.ones(m), np.zeros(m)].astype(np.int64)
    return fill(y).reshape(2 * m, width), y


def test_feature_widths():
    ds = gen_purchase_like(200, 30, 100, 0.1, seed=0)
    split = split_membership(ds, 0.5, 0.5, seed=0)
    model = TargetModel.build([30, 1024, 512, 256, 100], seed=0)
    assert build_attack_features(model, ds, split, "loss").width == 1
    assert build_attack_features(model, ds, split, "embedding", 2).width == 512
    pred = build_attack_features(model, ds, split, "prediction")
    assert pred.width == 100
    np.testing.assert_allclose(pred.train_features.sum(axis=1), 1.0, atol=1e-9)


def test_attack_partitions_are_balanced():
    ds = gen_purchase_like(101, 10, 2, 0.1, seed=1)
    split = split_membership(ds, 0.6, 0.5, seed=1)
    a = build_attack_features(TargetModel.build([10, 4, 2]), ds, split, "loss")
    for m in (a.train_membership, a.eval_membership):
        assert m.sum() * 2 == len(m)


def test_unbalanced_attack_dataset_rejected():
    with pytest.raises(InvalidArgument):
        AttackDataset(np.zeros((3, 1)), np.array([1, 1, 0]), np.zeros((2, 1)), np.array([1, 0]), "loss")


def test_unknown_setting():
    ds = gen_purchase_like(40, 5, 2, 0.1, seed=0)
    split = split_membership(ds, 0.5, 0.5, seed=0)
    with pytest.raises(InvalidArgument) as err:
        build_attack_features(TargetModel.build([5, 3, 2]), ds, split, "gradient")
    assert err.value.field == "setting"


def test_embedding_depth_out_of_range():
    ds = gen_purchase_like(40, 5, 2, 0.1, seed=0)
    split = split_membership(ds, 0.5, 0.5, seed=0)
    with pytest.raises(InvalidArgument) as err:
        build_attack_features(TargetModel.build([5, 3, 3, 3, 2]), ds, split, "embedding", 99)
    assert err.value.field == "depth"


def test_constant_features_give_chance():
    x, y = _balanced(100, 3, lambda y: np.ones((len(y), 3)))
    res = run_mia(AttackDataset(x, y, x, y, "embedding"), attack_config(0, epochs=5))
    assert abs(res.auc - 0.5) <= 0.05


def test_oracle_feature_gives_perfect_auc():
    x, y = _balanced(100, 1, lambda y: y.astype(float))
    res = run_mia(AttackDataset(x, y, x, y, "loss"), attack_config(0, epochs=10))
    assert res.auc >= 0.99
    assert roc_auc(res.scores, res.membership).auc == res.auc
    assert roc_auc(res.scores, 1 - res.membership).auc == pytest.approx(1 - res.auc, abs=1e-12)


def test_single_class_partition_rejected():
    x = np.zeros((4, 1))
    ds = AttackDataset.__new__(AttackDataset)
    ds.train_features, ds.eval_features = x, x
    ds.train_membership = np.ones(4, dtype=np.int64)
    ds.eval_membership = np.array([1, 1, 0, 0])
    ds.setting, ds.depth = "loss", None
    with pytest.raises(InvalidArgument):
        run_mia(ds, attack_config(0, epochs=1))


def test_loss_attack_on_overfit_target(overfit_target):
    ds, split, model, _ = overfit_target
    res = run_mia(build_attack_features(model, ds, split, "loss"), attack_config(11))
    assert res.auc >= 0.60
    rec = res.to_record("F2")
    assert set(rec) == {"finding", "setting", "depth", "seed", "auc", "attack_accuracy"}


def test_replay_is_identical(overfit_target):
    ds, split, model, _ = overfit_target
    feats = build_attack_features(model, ds, split, "prediction")
    a = run_mia(feats, attack_config(3, epochs=10))
    b = run_mia(feats, attack_config(3, epochs=10))
    assert a.auc == b.auc
    np.testing.assert_array_equal(a.scores, b.scores)


def test_shadow_with_labels_beats_embedding(overfit_target):
    ds, split, model, _ = overfit_target
    cfg = attack_config(11)
    depth = model.deep_depth
    emb = run_mia(build_attack_features(model, ds, split, "embedding", depth), cfg)
    shadow = shadow_attack_with_labels(model, ds, split, depth, cfg)
    assert shadow.auc > emb.auc
    assert shadow.setting == "shadow-labels"


def test_shadow_depth_zero_runs(blob_target):
    ds, split, model, _ = blob_target
    cfg = attack_config(0, epochs=5)
    a = shadow_attack_with_labels(model, ds, split, 0, cfg)
    b = shadow_attack_with_labels(model, ds, split, 0, cfg)
    assert 0.0 <= a.auc <= 1.0
    assert a.auc == b.auc


def test_pseudolabels_cluster_quality(blob_target):
    ds, split, model, _ = blob_target
    res = shadow_attack_with_pseudolabels(model, ds, split, 0, 3, attack_config(0, epochs=5))
    assert res.clustering_quality >= 0.95
    assert "clustering_quality" in res.to_record()


def test_pseudolabels_reject_k1(blob_target):
    ds, split, model, _ = blob_target
    with pytest.raises(InvalidArgument):
        shadow_attack_with_pseudolabels(model, ds, split, 1, 1, attack_config(0))
