import warnings

import numpy as np
import pytest
from scipy import integrate

from mlheat.medium import SdeParams, from_sde_params

# generic medium: every coefficient distinct, no matching condition
GENERIC = SdeParams(p=1.0, q=2.0, r=0.5, alpha=0.5, beta=-1.0, a=1.0)
# beta = 1 - q/r
MATCHED = SdeParams(p=1.0, q=2.0, r=0.5, alpha=0.5, beta=1.0 - 2.0 / 0.5, a=1.0)
BROWNIAN = SdeParams(p=1.0, q=1.0, r=1.0, alpha=0.0, beta=0.0, a=1.0)


@pytest.fixture
def generic():
    return GENERIC


@pytest.fixture
def matched():
    return MATCHED


@pytest.fixture
def generic_medium():
    return from_sde_params(GENERIC)


def quad_pieces(fn, lo, hi, breaks=(), epsabs=1e-14):
    """Adaptive quadrature of ``fn`` on ``[lo, hi]`` split at ``breaks``."""
    cuts = sorted({lo, hi} | {b for b in breaks if lo < b < hi})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        with warnings.catch_warnings():
            # roundoff notices on near-zero integrands; accuracy is asserted by the caller
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(fn, a, b, epsabs=epsabs, epsrel=1e-13, limit=400)
        total += val
    return total


def window(params, t, x, width=12.0):
    """Integration window wide enough that Gaussian tails are negligible."""
    s = width * params.max_diffusion * np.sqrt(t)
    return x - s, x + s
