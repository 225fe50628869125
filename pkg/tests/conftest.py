import numpy as np
import pytest

from xvec_anon.dataset import Dataset, SpeakerPool
from xvec_anon.plda import PldaModel


def random_model(rng, d, q=None, r=None, sigma=1e-3, scale_v=1.0, scale_d=0.5):
    q = d if q is None else q
    r = d if r is None else r
    return PldaModel(
        rng.standard_normal(d),
        scale_v * rng.standard_normal((d, q)),
        scale_d * rng.standard_normal((d, r)),
        sigma_floor=sigma,
    )


def random_pool(rng, n, d, n_male=None, prefix="p"):
    n_male = n // 2 if n_male is None else n_male
    genders = ["M"] * n_male + ["F"] * (n - n_male)
    rng.shuffle(genders)
    return SpeakerPool([f"{prefix}{i:03d}" for i in range(n)], genders, rng.standard_normal((n, d)))


def random_dataset(rng, n_spk, n_utt, d):
    uids, spks, gens = [], [], []
    for s in range(n_spk):
        g = "M" if s % 2 else "F"
        for u in range(n_utt):
            uids.append(f"s{s}-u{u}")
            spks.append(f"s{s}")
            gens.append(g)
    return Dataset(uids, spks, gens, rng.standard_normal((n_spk * n_utt, d)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
