import numpy as np
import pytest

from gapgcn.model import ResolverConfig, Setting
from gapgcn.params import Hyper
from gapgcn.synth import make_synthetic_dataset

ALL_SETTINGS = tuple(Setting)


def tiny_config(setting, embedding_dim=6, *, dropout=0.0, l2=0.0,
                use_gate_bias=True, seed=0, layers=1):
    """Small-width config used across the suite to keep runtimes low."""
    return ResolverConfig(
        setting=Setting(setting), embedding_dim=embedding_dim,
        bert_branch_dim=8, rgcn_dim=7, head_hidden_dim=9,
        rgcn_layers=layers, use_gate_bias=use_gate_bias,
        hyper=Hyper(dropout_p=dropout, l2_lambda=l2, seed=seed))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def small_dataset():
    return make_synthetic_dataset(8, embedding_dim=6, seed=11)


@pytest.fixture
def dataset_dir(tmp_path):
    """A clean on-disk dataset directory."""
    from gapgcn.corpus import save_dataset
    ds = make_synthetic_dataset(6, embedding_dim=5, seed=21)
    out = tmp_path / "data"
    save_dataset(ds, out)
    return out
