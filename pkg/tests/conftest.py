import numpy as np
import pytest

from asearch.core import MassMatrix
from asearch.potentials import IpcBarrier1D, NeoHookeanChain1D


@pytest.fixture
def soft_chain():
    return NeoHookeanChain1D.from_rod(1.0, 30, 10.0, 1.0)


@pytest.fixture
def soft_scene(soft_chain):
    """Soft chain against an IPC wall at the origin: (mass, potential, chain, barrier)."""
    barrier = IpcBarrier1D(1e5, 1e-3, 0.0, 1)
    return MassMatrix(soft_chain.masses), soft_chain + barrier, soft_chain, barrier


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
