import pytest

FAST_INI = """\
[grid]
N = 64

[solver]
dt = 5e-3
T = 0.5
snapshot_every = 5

[experiment]
ensemble = 100
gronwall_trajectories = 2
uniqueness_trajectories = 20
prm_samples = 2000
haar_levels = 3, 4, 5, 6, 7, 8
"""


@pytest.fixture
def fast_ini():
    return FAST_INI


@pytest.fixture
def fast_config_file(tmp_path):
    path = tmp_path / "fast.ini"
    path.write_text(FAST_INI)
    return path
