import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# --------------------------------------------------------------------------
# Session-scoped experiment artifacts shared by the harness and acceptance tests


@pytest.fixture(scope="session")
def experiment_config():
    from relnav.harness.config import default_config
    return default_config()


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory, experiment_config):
    """The desk-scale recording from the experiment config, written to disk."""
    import time

    from relnav.harness.config import config_hash, planner_config, sim_config
    from relnav.harness.dataset import record_dataset, write_dataset
    h = experiment_config["harness"]
    t0 = time.perf_counter()
    samples = record_dataset(h["record_episodes"], h["record_mix"], h["seed"], sim_config(experiment_config),
                             planner_config(experiment_config), h["record_max_steps"])
    path = tmp_path_factory.mktemp("desk") / "desk.rnds"
    digest = write_dataset(path, samples, {"config_hash": config_hash(experiment_config)})
    return {"path": path, "samples": samples, "sha256": digest, "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def desk_training(tmp_path_factory, experiment_config, desk_dataset):
    """Two identical training runs plus a label-shuffled control on the desk dataset."""
    import time

    from relnav.harness.config import reliability_config, train_config
    from relnav.harness.training import run_training, samples_to_batch
    samples = desk_dataset["samples"]
    tc = train_config(experiment_config)
    rc = reliability_config(experiment_config)
    val = experiment_config["harness"]["val_fraction"]
    out = tmp_path_factory.mktemp("train")
    t0 = time.perf_counter()
    batch = samples_to_batch(samples, rc)
    runs = []
    for name in ("first", "second"):
        params, log, metrics = run_training(samples, tc, val, rc, out / f"{name}.json", out / f"{name}.log.csv",
                                            experiment_config, desk_dataset["sha256"], batch=batch)
        runs.append({"params": params, "metrics": metrics, "log": (out / f"{name}.log.csv").read_bytes(),
                     "checkpoint": out / f"{name}.json"})
    _, _, control = run_training(samples, tc, val, rc, shuffle_control=True, batch=batch)
    return {"runs": runs, "control": control, "seconds": time.perf_counter() - t0 + desk_dataset["seconds"]}


# --------------------------------------------------------------------------
# One PASS/FAIL line per acceptance check, printed in the terminal summary

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    def record(name: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance verdicts")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
