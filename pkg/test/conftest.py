import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from tfqkd_sim import tables  # noqa: E402
from tfqkd_sim.cli import BUNDLED  # noqa: E402
from tfqkd_sim.core import DetectorParams, ProtocolConfig, Variant  # noqa: E402
from tfqkd_sim.keyrates import RateParams  # noqa: E402
from tfqkd_sim.linkmodel import FeedbackParams  # noqa: E402
from tfqkd_sim.tables import Schema  # noqa: E402

PARAM_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'param')


@pytest.fixture(scope='session')
def table1_rows():
    return tables.ingest(BUNDLED[Schema.TABLE_I], Schema.TABLE_I)


@pytest.fixture(scope='session')
def table2_rows():
    return tables.ingest(BUNDLED[Schema.TABLE_II], Schema.TABLE_II)


@pytest.fixture
def row_at(table1_rows):
    def find(loss):
        return next(r for r in table1_rows if r['total_loss_db'] == loss)
    return find


@pytest.fixture
def rate_params():
    return RateParams()


@pytest.fixture
def det():
    return DetectorParams()


@pytest.fixture
def fb():
    return FeedbackParams()


@pytest.fixture
def sns_config():
    return ProtocolConfig(variant=Variant.SEND_NOT_SEND)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def param_path():
    def path(name):
        return os.path.join(PARAM_DIR, name)
    return path
