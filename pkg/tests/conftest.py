import numpy as np
import pytest

from panobench.distortion import SynthesisPlan, build_database, procedural_panorama, write_database
from panobench.geometry import ErpImage


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pano512():
    return procedural_panorama(3, width=512)


@pytest.fixture(scope="session")
def small_db(tmp_path_factory):
    """Six 512x256 sources, blur + noise, homogeneous, 66 records."""
    root = tmp_path_factory.mktemp("small_db")
    sources = [procedural_panorama(i, width=512) for i in range(6)]
    db = build_database(sources, SynthesisPlan(("GB", "GN"), 5, ("homogeneous",)), seed=11, name="small")
    return write_database(db, root / "small")


@pytest.fixture(scope="session")
def small_hetero_db(tmp_path_factory):
    root = tmp_path_factory.mktemp("small_hetero")
    sources = [procedural_panorama(i, width=512) for i in range(6)]
    db = build_database(sources, SynthesisPlan(("GB", "GN"), 5, ("heterogeneous",)), seed=11, name="small-het")
    return write_database(db, root / "small-het")


def flat_image(value=128, w=64):
    return ErpImage(np.full((w // 2, w, 3), value, np.uint8), id="flat")


# -- acceptance report ---------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_acceptance(n: int, ok: bool, detail: str) -> str:
    line = f"ACCEPTANCE {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
