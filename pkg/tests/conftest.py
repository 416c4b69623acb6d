import socket

import pytest

from aipi.evidence_model import load_dataset
from aipi.release import build_release, load_config
from helpers import FIXTURE, RELEASE_CONFIG


def pytest_configure(config):
    config.addinivalue_line("markers", "allow_network: test may open sockets (loopback only)")


@pytest.fixture(autouse=True)
def _no_network(request, monkeypatch):
    """Only tests marked allow_network may connect anywhere."""
    if request.node.get_closest_marker("allow_network"):
        return

    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


@pytest.fixture(scope="session")
def cohort():
    return load_dataset(FIXTURE)


@pytest.fixture(scope="session")
def release_config():
    return load_config(RELEASE_CONFIG)


@pytest.fixture(scope="session")
def built_release(tmp_path_factory, release_config):
    out = tmp_path_factory.mktemp("release") / "rel"
    build_release(FIXTURE, release_config, out)
    return out
