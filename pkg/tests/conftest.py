import numpy as np
import pytest

from vvlim.systems import make_catalog_system


@pytest.fixture(scope="session")
def burgers():
    return make_catalog_system("burgers")


@pytest.fixture(scope="session")
def cubic():
    return make_catalog_system("cubic")


@pytest.fixture(scope="session")
def p_system():
    return make_catalog_system("p_system", {"gamma": 1.4})


@pytest.fixture(scope="session")
def linear_const():
    return make_catalog_system("linear_const")


@pytest.fixture(scope="session")
def char2x2():
    return make_catalog_system("char2x2")


@pytest.fixture(scope="session")
def ex_travelling():
    return make_catalog_system("ex_travelling")


@pytest.fixture(scope="session")
def ex_kernel():
    return make_catalog_system("ex_kernel")


@pytest.fixture(scope="session")
def singular2x2():
    return make_catalog_system("singular2x2")


@pytest.fixture(scope="session")
def singular3x3():
    return make_catalog_system("singular3x3_q1")


@pytest.fixture(scope="session")
def singular4x4():
    return make_catalog_system("singular4x4")


def random_c11(rng, m=513, s=1.0, n_modes=6, amp=1.0):
    """Random trigonometric sample with an honest Lipschitz certificate."""
    from vvlim.envelopes import SampledFunction

    tau = np.linspace(0.0, s, m)
    a = amp * rng.standard_normal(n_modes) / np.arange(1, n_modes + 1)
    b = amp * rng.standard_normal(n_modes) / np.arange(1, n_modes + 1)
    k = 2 * np.pi * np.arange(1, n_modes + 1) / s
    vals = sum(a[j] * np.sin(k[j] * tau) + b[j] * (np.cos(k[j] * tau) - 1.0)
               for j in range(n_modes))
    der = sum(a[j] * k[j] * np.cos(k[j] * tau) - b[j] * k[j] * np.sin(k[j] * tau)
              for j in range(n_modes))
    lip = float(sum((abs(a[j]) + abs(b[j])) * k[j] ** 2 for j in range(n_modes)))
    return SampledFunction(s=s, values=vals, deriv=der, lip_k=max(lip, 1e-6))
