import pathlib

import pytest

from drrcalc.caseio import (StudyConfig, apply_renewables, load_renewables_file,
                            parse_matpower_file)

CASE_DIR = pathlib.Path(__file__).resolve().parent.parent / "cases"


def load_case(stem: str):
    raw = parse_matpower_file(CASE_DIR / f"{stem}.m")
    specs = load_renewables_file(CASE_DIR / f"{stem}_renewables.json")
    return apply_renewables(raw, specs)


@pytest.fixture(scope="session")
def twobus():
    return load_case("case2_ramp")


@pytest.fixture(scope="session")
def pjm5():
    return load_case("case5_wind")


@pytest.fixture(scope="session")
def ieee39():
    return load_case("case39_wind")


@pytest.fixture()
def cfg():
    return StudyConfig()
