from modules.gradcheck_suite import BLOCK_TOLERANCE, NETWORK_TOLERANCE, CheckResult, run_suite, summarize


def test_block_suite_passes():
    results = run_suite(include_network=False)
    names = {r.name for r in results}
    assert {"conv3d", "selective_scan", "ss3d", "mamba_block", "res_block", "bi_level_fuse"} <= names
    assert "network" not in names
    failed = [(r.name, r.error) for r in results if not r.passed]
    assert failed == []


def test_network_check_on_small_model(tiny_config):
    results = run_suite(tiny_config, seed=1, network_coords=4)
    network = [r for r in results if r.name == "network"]
    assert len(network) == 1
    assert network[0].tolerance == NETWORK_TOLERANCE
    assert network[0].passed


def test_summarize():
    results = [
        CheckResult("exp", 1e-9, BLOCK_TOLERANCE, 0.01),
        CheckResult("ss3d", 2e-4, BLOCK_TOLERANCE, 0.2),
        CheckResult("network", 5e-5, NETWORK_TOLERANCE, 3.0),
    ]
    summary = summarize(results)
    assert summary["passed"] is False
    assert summary["checks"]["ss3d"]["passed"] is False
    assert summary["max_block_error"] == 2e-4
    assert summary["max_network_error"] == 5e-5


def test_summarize_without_network():
    summary = summarize([CheckResult("exp", 1e-9, BLOCK_TOLERANCE, 0.01)])
    assert summary["passed"] is True
    assert summary["max_network_error"] is None
