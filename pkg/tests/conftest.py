from __future__ import annotations

import pytest

from dsb.config import load_config
from dsb.connector import Connector
from dsb.network import Network
from dsb.rules import Application
from dsb.scenario import default_lei


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture
def net(config):
    return Network(config, seed=3)


def join(net: Network, name: str, space: str, pid: str | None = None, country: str = "JP", **app) -> Connector:
    """Onboard (or dual-stack) connector ``name`` into ``space``."""
    connector = net.connectors.get(name) or Connector(name, net)
    pid = pid or f"{name}@{space}"
    fields = {"legal_name": f"{pid} Ltd", "country": country, "lei": default_lei(pid), "secret": f"secret-{pid}"}
    fields.update(app)
    connector.onboard(space, Application(pid, **fields))
    net.connectors[name] = connector
    return connector


def provider(net: Network, space: str, name: str = "prov", dataset: str = "ds-1", model: str | None = None) -> Connector:
    c = join(net, name, space)
    c.register_device(f"{name}.{space}.example")
    model = model or net.space(space).repository.latest()[0].model_id
    c.publish(dataset, model, f"payload:{dataset}".encode(), theme=("battery",))
    return c
