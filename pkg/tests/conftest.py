import pytest

from contactwalk.kernel import constant_kernel, example_drift_kernel
from contactwalk.lattice import BoxSpec, configuration_bernoulli


@pytest.fixture
def drift_kernel():
    """Radius-0 occupancy kernel: infected site drifts right, healthy left."""
    return example_drift_kernel()


@pytest.fixture
def right_kernel():
    """Deterministic +1 jumps, rate 1: the walk is a Poisson counter."""
    return constant_kernel([(1,)], [1.0])


@pytest.fixture
def torus5():
    return BoxSpec(dimension=1, half_width=2, boundary="periodic")


@pytest.fixture
def torus101():
    return BoxSpec(dimension=1, half_width=50, boundary="periodic")


@pytest.fixture
def empty_box():
    return BoxSpec(dimension=1, half_width=20, boundary="empty")


def random_config(box, gen, p=0.5):
    return configuration_bernoulli(box, p, gen)
