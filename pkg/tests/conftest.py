import pytest

from embed_audit.core import TrainConfig
from embed_audit.synthdata import gen_bow_text, gen_property_blobs, gen_purchase_like, split_membership
from embed_audit.target import train_target


@pytest.fixture(scope="session")
def overfit_target():
    """Small-n, many-epoch purchase-like target with a large train/test gap."""
    ds = gen_purchase_like(1200, 60, 20, 0.3, seed=11)
    split = split_membership(ds, 0.5, 0.5, seed=11)
    model, fit = train_target(ds, split, [60, 128, 64, 32, 20], TrainConfig(epochs=150, seed=11))
    return ds, split, model, fit


@pytest.fixture(scope="session")
def blob_target():
    ds = gen_property_blobs(1200, 12, 3, [("orth", 0.9), ("null", 0.0)], seed=4, property_shift=2.0)
    split = split_membership(ds, 0.5, 0.5, seed=4)
    model, fit = train_target(ds, split, [12, 32, 16, 3], TrainConfig(epochs=30, seed=4))
    return ds, split, model, fit


@pytest.fixture(scope="session")
def bow_target():
    """BoW target with a linear token-embedding first layer, plus a disjoint aux corpus."""
    full = gen_bow_text(50, 5, 5200, 2, seed=1)
    ds = full.subset(range(1200))
    aux = full.subset(range(1200, 5200))
    split = split_membership(ds, 0.5, 0.5, seed=1)
    model, fit = train_target(ds, split, [50, 64, 64, 32, 2], TrainConfig(epochs=10, seed=1), embedding_layer=True)
    return ds, aux, split, model, fit
