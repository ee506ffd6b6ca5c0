import numpy as np
import pytest

from covlab.matcore import SymmetricMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def random_symmetric(rng, dim, scale=1.0):
    a = rng.standard_normal((dim, dim)) * scale
    return SymmetricMatrix((a + a.T) / 2.0)


def random_pd(rng, dim, eig_low=0.5, eig_high=1.5):
    """Random PD matrix with eigenvalues drawn uniformly from [eig_low, eig_high]."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    lam = rng.uniform(eig_low, eig_high, size=dim)
    return SymmetricMatrix(q @ np.diag(lam) @ q.T)
