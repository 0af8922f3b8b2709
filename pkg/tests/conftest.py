import numpy as np
import pytest

from hybridctl import CostWeights, lqr_gain, make_env, to_linear_policy
from hybridctl.config import DEFAULT_LQR_WEIGHTS
from hybridctl.trainer import linear_only_hybrid, make_hybrid


@pytest.fixture(scope="session")
def pendulum():
    return make_env("pendulum")


@pytest.fixture(scope="session")
def cartpole():
    return make_env("cartpole")


@pytest.fixture(scope="session")
def mountaincar():
    return make_env("mountaincar")


@pytest.fixture(scope="session", params=["pendulum", "cartpole", "mountaincar"])
def each_env(request):
    return make_env(request.param)


def default_weights(env):
    q, r = DEFAULT_LQR_WEIGHTS[env.name]
    return CostWeights(Q=np.diag(q), R=np.array([[r]]))


def synthesize_linear(env):
    gain = lqr_gain(env.analytic_linearization(), default_weights(env))
    return gain, to_linear_policy(gain, env.embedding())


@pytest.fixture(scope="session")
def pendulum_linear(pendulum):
    return synthesize_linear(pendulum)[1]


@pytest.fixture(scope="session")
def pendulum_hybrid(pendulum, pendulum_linear):
    return make_hybrid(pendulum, pendulum_linear, rng=np.random.default_rng(7))


@pytest.fixture(scope="session")
def pendulum_linear_only(pendulum, pendulum_linear):
    return linear_only_hybrid(pendulum, pendulum_linear)
