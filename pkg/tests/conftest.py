import json

import pytest

from autocopula.fixture import generate_fixture


@pytest.fixture(scope="session")
def fixture_data():
    """Full ten-year synthetic daily series (dates, values)."""
    return generate_fixture()


@pytest.fixture(scope="session")
def fixture_csv(fixture_data, tmp_path_factory):
    dates, values = fixture_data
    path = tmp_path_factory.mktemp("data") / "fixture.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,value\n")
        for d, x in zip(dates, values):
            fh.write(f"{d.isoformat()},{float(x)!r}\n")
    return path


@pytest.fixture(scope="session")
def short_csv(fixture_data, tmp_path_factory):
    """Four-year slice, enough for every stage but much faster to fit."""
    dates, values = fixture_data
    n = sum(1 for d in dates if d.year < 2009)
    path = tmp_path_factory.mktemp("data") / "short.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,value\n")
        for d, x in zip(dates[:n], values[:n]):
            fh.write(f"{d.isoformat()},{float(x)!r}\n")
    return path


def write_config(path, input_csv, **simulate_overrides):
    """Minimal JSON config pointing at ``input_csv``."""
    cfg = {"data": {"input": str(input_csv)}}
    if simulate_overrides:
        copula_keys = {"target_per_rect", "conditioning"}
        cfg["copula"] = {k: v for k, v in simulate_overrides.items()
                         if k in copula_keys}
        cfg["simulate"] = {k: v for k, v in simulate_overrides.items()
                           if k not in copula_keys}
        cfg = {k: v for k, v in cfg.items() if v}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh)
    return path
