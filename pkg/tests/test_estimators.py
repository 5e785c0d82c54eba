import numpy as np
import pytest
from sklearn.base import clone

from coolshape import CoolerFlowModel, CoolerShapeOptimizer
from coolshape.mesh import MeshError
from coolshape.optimizer import OptimizerConfig
from coolshape.physics import DarcyParams

from conftest import SMALL


def test_params_round_trip():
    est = CoolerFlowModel(model="darcy2d", darcy=DarcyParams(phi=0.3), supg=False, n_bins=4)
    params = est.get_params()
    assert params["model"] == "darcy2d" and params["n_bins"] == 4
    twin = clone(est)
    assert twin.get_params()["darcy"] == est.darcy
    assert not hasattr(twin, "state_")


def test_flow_model_fit(small_full):
    est = CoolerFlowModel().fit(small_full)
    assert est.cost_.J == pytest.approx(2.01, rel=1e-12)
    assert est.channel_fluxes_.sum() == pytest.approx(6e-5, rel=1e-6)
    assert est.score(small_full) == pytest.approx(-est.cost_.J, rel=1e-12)


def test_darcy_flow_model_bins(small_darcy):
    est = CoolerFlowModel(model="darcy2d", n_bins=SMALL.n_channels).fit(small_darcy)
    assert len(est.channel_fluxes_) == SMALL.n_channels
    assert CoolerFlowModel(model="darcy2d").fit(small_darcy).channel_fluxes_ is None


def test_wrong_inputs(small_full, small_darcy):
    with pytest.raises(TypeError):
        CoolerFlowModel().fit(np.zeros((3, 2)))
    with pytest.raises(MeshError):
        CoolerFlowModel(model="darcy2d").fit(small_full)
    with pytest.raises(MeshError):
        CoolerFlowModel().fit(small_darcy)
    with pytest.raises(ValueError):
        CoolerFlowModel(model="full3d").fit(small_full)


def test_score_requires_fit(small_full):
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        CoolerFlowModel().score(small_full)


def test_optimizer_fit(small_full):
    est = CoolerShapeOptimizer(optimizer=OptimizerConfig(max_iter=2)).fit(small_full)
    assert est.n_iter_ == len(est.history_) - 1 <= 2
    assert est.mesh_.n_vertices == small_full.n_vertices
    J = est.history_.column("J")
    assert J[-1] <= J[0]
