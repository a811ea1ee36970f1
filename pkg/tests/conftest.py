import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from spatialrl import task_from_dict

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def fixture_task():
    """The desk-scale task: four unit crates in a 6 x 5 x 3 room."""
    return task_from_dict(json.loads((DATA_DIR / "task_crates.json").read_text()))


@pytest.fixture(scope="session")
def small_task():
    return task_from_dict(
        {
            "task_id": "small",
            "room": {"x": 6, "y": 5, "z": 3},
            "objects": [
                {"id": "sofa_1", "category": "sofa", "size_m": [2.0, 0.9, 0.9]},
                {"id": "table_1", "category": "table", "size_m": [1.2, 0.8, 0.75]},
                {"id": "lamp_1", "category": "lamp", "size_m": [0.4, 0.4, 1.6]},
            ],
            "user_preference": "a cozy reading corner",
        }
    )
