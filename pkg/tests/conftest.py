import pytest

from chanforge.canyon_tracer import ENV_NO_PARALLEL
from chanforge.metadata import ENV_FIXED_UTC_NOW

from .files import (
    canyon_scene_json,
    one_ray_csv,
    two_ray_csv,
)

FIXED_UTC_NOW = "2020-01-01T00:00:00+00:00"


def pytest_addoption(parser):
    parser.addoption(
        "--ci-prefix", default="chanforge-test", help="Prefix for CI test."
    )


@pytest.fixture(scope="session")
def ci_prefix(request):
    return request.config.getoption("--ci-prefix").rstrip("/")


@pytest.fixture(scope="session")
def local_test_path(tmpdir_factory, ci_prefix):
    return tmpdir_factory.mktemp(ci_prefix).realpath()


@pytest.fixture(scope="session")
def local_canyon_scene_json(local_test_path):
    return canyon_scene_json(local_test_path, make=True)


@pytest.fixture(scope="session")
def local_one_ray_csv(local_test_path):
    return one_ray_csv(local_test_path, make=True)


@pytest.fixture(scope="session")
def local_two_ray_csv(local_test_path):
    return two_ray_csv(local_test_path, make=True)


@pytest.fixture
def fixed_utc_now(monkeypatch):
    monkeypatch.setenv(ENV_FIXED_UTC_NOW, FIXED_UTC_NOW)
    return FIXED_UTC_NOW


@pytest.fixture
def no_parallel(monkeypatch):
    monkeypatch.setenv(ENV_NO_PARALLEL, "1")
