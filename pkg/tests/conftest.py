import functools

import pytest

from miqplan.fitting import FitConfig, RegionTable, build_region_table


@functools.lru_cache(maxsize=None)
def _table(region_count: int) -> RegionTable:
    return build_region_table(FitConfig(region_count=region_count))


@pytest.fixture(scope="session")
def table16() -> RegionTable:
    return _table(16)


@pytest.fixture(scope="session")
def table32() -> RegionTable:
    return _table(32)


@pytest.fixture(scope="session")
def table64() -> RegionTable:
    return _table(64)


@pytest.fixture(scope="session")
def table128() -> RegionTable:
    return _table(128)
