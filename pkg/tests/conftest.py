import numpy as np
import pytest

from radonsphere.potential import PotentialSpec, preset
from radonsphere.spectral import assemble_hamiltonian, eigensolve

DIAGONAL = np.ones(3) / np.sqrt(3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def quadratic():
    return preset("quadratic")


@pytest.fixture(scope="session")
def quadratic_system(quadratic):
    H = assemble_hamiltonian(quadratic, 30)
    return H, eigensolve(H)


@pytest.fixture(scope="session")
def free_system():
    H = assemble_hamiltonian(PotentialSpec.constant(0.0), 20)
    return H, eigensolve(H)
