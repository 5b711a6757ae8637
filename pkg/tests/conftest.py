import numpy as np
import pytest

from cost_engine.costs import CostSpec
from cost_engine.obstacles import ConvexObstacle
from dynamics_service.models import make_double_integrator
from mppi_engine.estimator import PiConfig

UAV_TARGET = np.array([8.0, 8.0, 0.0, 0.0])


@pytest.fixture(autouse=True)
def runs_db(tmp_path, monkeypatch):
    """Keep the run history out of the working tree."""
    path = tmp_path / "runs.db"
    monkeypatch.setenv("PI_RUNS_DB", str(path))
    return path


@pytest.fixture
def square_obstacle():
    return ConvexObstacle.box((3.0, 3.0), (5.0, 5.0), margin=0.2)


@pytest.fixture
def uav_spec(square_obstacle):
    return CostSpec(
        Q=np.eye(4),
        Q_T=np.eye(4),
        x_tgt=UAV_TARGET,
        dt=0.1,
        lam=10.0,
        omega_c=100.0,
        obstacles=(square_obstacle,),
    )


@pytest.fixture
def plain_spec():
    """Quadratic-only cost around the origin."""
    return CostSpec(Q=np.eye(4), Q_T=np.eye(4), x_tgt=np.zeros(4), dt=0.1, lam=10.0)


@pytest.fixture
def stable_model():
    return make_double_integrator(-0.5, horizon=10)


def make_pi(num_samples=200, lam=10.0, horizon=10, seed=0, **kwargs):
    return PiConfig.zero_nominal(2, horizon, num_samples=num_samples, lam=lam, dt=0.1, seed=seed, **kwargs)


@pytest.fixture
def pi_factory():
    return make_pi
