import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vpfusion.config import RunConfig
from vpfusion.estimators import Kitti3DEvaluator, VoxelPixelFusion, VoxelPixelPairing
from vpfusion.exceptions import ConfigError
from vpfusion.pipeline import load_frame, run_fusion, run_pairing


@pytest.fixture(scope="module")
def frame():
    return load_frame(RunConfig())


def test_pairing_matches_pipeline(frame):
    est = VoxelPixelPairing(c_v=8, c_p=6).fit()
    got = est.transform(frame)
    ref = run_pairing(frame, RunConfig(c_v=8, c_p=6))
    assert [p.voxel_index for p in got.pairs] == [p.voxel_index for p in ref.pairs]
    np.testing.assert_array_equal(np.stack([p.params for p in got.pairs]), np.stack([p.params for p in ref.pairs]))
    assert len(est.transform([frame, frame])) == 2


def test_fusion_matches_pipeline(frame):
    result = VoxelPixelPairing(c_v=8, c_p=6).fit_transform(frame)
    lidar, cam = VoxelPixelFusion(c_v=8, c_p=6, seed=3).fit().transform(result)
    ref_lidar, ref_cam, _ = run_fusion(result, RunConfig(c_v=8, c_p=6, seed=3))
    assert cam.data.tobytes() == ref_cam.data.tobytes()
    assert all(lidar[k].tobytes() == ref_lidar[k].tobytes() for k in lidar)


def test_params_and_clone():
    est = VoxelPixelFusion(c_v=4, scatter="center_cell")
    assert est.get_params()["scatter"] == "center_cell"
    twin = clone(est.set_params(seed=9))
    assert twin.get_params() == est.get_params() and not hasattr(twin, "weights_")


def test_not_fitted(frame):
    with pytest.raises(NotFittedError):
        VoxelPixelPairing().transform(frame)
    with pytest.raises(NotFittedError):
        Kitti3DEvaluator().score([])


@pytest.mark.parametrize(
    "est",
    [VoxelPixelPairing(c_v=2), VoxelPixelPairing(stride=3), VoxelPixelFusion(scatter="x"), VoxelPixelFusion(c_p=1.5),
     Kitti3DEvaluator(iou_car=0.0)],
)
def test_invalid_params(est):
    with pytest.raises(ConfigError):
        est.fit()


def test_transform_rejects_wrong_items(frame):
    with pytest.raises(ConfigError):
        VoxelPixelFusion(c_v=4, c_p=4).fit().transform([frame])


def test_evaluator_score(frame):
    ev = Kitti3DEvaluator().fit()
    assert ev.score([(frame.labels, frame.labels)]) == 100.0
    assert ev.evaluate([([], frame.labels)]).values() == [0.0] * 9
