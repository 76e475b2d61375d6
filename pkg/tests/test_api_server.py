import pytest

from modules.api_server import SegmentationAPI
from modules.segmentation_system import SegmentationSystem


@pytest.fixture
def workspace(tmp_path, small_config_file):
    system = SegmentationSystem(small_config_file)
    system.make_data(str(tmp_path / "data"))
    return system, tmp_path


@pytest.fixture
def client(workspace):
    system, _ = workspace
    return SegmentationAPI(system).app.test_client()


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.get_json()
    assert body["status"] == "online"
    assert body["model_loaded"] is False


def test_stats(client):
    body = client.get("/stats").get_json()
    assert body["success"] is True
    assert body["stats"]["config"]["net"]["base_channels"] == 2


def test_segment_requires_json(client):
    response = client.post("/segment", data="input=x")
    assert response.status_code == 400
    assert response.get_json()["success"] is False


def test_segment_requires_input(client):
    response = client.post("/segment", json={"out": "x"})
    assert response.status_code == 400
    assert "input" in response.get_json()["error"]


def test_segment_without_model_is_client_error(client, workspace):
    _, tmp_path = workspace
    response = client.post("/segment", json={"input": str(tmp_path / "data")})
    assert response.status_code == 400
    assert response.get_json()["type"] == "ModelFileError"


def test_segment_with_trained_model(workspace):
    system, tmp_path = workspace
    system.train(str(tmp_path / "data"), str(tmp_path / "model.segm"))
    client = SegmentationAPI(system).app.test_client()
    response = client.post("/segment", json={"input": str(tmp_path / "data"), "out": str(tmp_path / "pred")})
    assert response.status_code == 200
    samples = response.get_json()["samples"]
    assert len(samples) == 3
    for summary in samples.values():
        assert summary["extents"] == [8, 8, 8]
        assert sum(summary["voxels_per_class"].values()) == 512


def test_evaluate(client, workspace):
    _, tmp_path = workspace
    data = str(tmp_path / "data")
    response = client.post("/evaluate", json={"pred": data, "gt": data, "percentile": 95})
    assert response.status_code == 200
    report = response.get_json()["report"]
    assert report["mean_dice"] == 1.0
    assert report["hausdorff_percentile"] == 95.0


def test_evaluate_missing_fields(client):
    response = client.post("/evaluate", json={"pred": "p"})
    assert response.status_code == 400
    assert "gt" in response.get_json()["error"]


def test_evaluate_missing_directory(client, workspace):
    _, tmp_path = workspace
    response = client.post("/evaluate", json={"pred": str(tmp_path / "none"), "gt": str(tmp_path / "none")})
    assert response.status_code == 400
    assert response.get_json()["type"] == "VolumeFormatError"
