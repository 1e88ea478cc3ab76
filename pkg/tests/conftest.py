"""
Shared fixtures: small deterministic keys, tagged files, signing identities and ledgers
"""

from functools import lru_cache

import pytest

from porchain.crypto import SECTOR_WIDTH_BYTES, SigKeypair, XofSampler
from porchain.ledger import Ledger
from porchain.models import ContractTerms, Scheme
from porchain.por import keygen, tag_file
from porchain.scenarios import ScenarioConfig

SEED = "a5" * 32


def pytest_addoption(parser):
    parser.addoption(
        "--trials", type=int, default=10, help="Randomized trials per property cell (default 10)"
    )


def sampler(label: str) -> XofSampler:
    return XofSampler(label.encode("ascii").ljust(32, b"\x00"), "TEST")


def file_bytes(size: int, label: str = "data") -> bytes:
    return sampler(label).read(size)


@pytest.fixture(scope="session")
def aub_keys():
    """AuB keys with two sectors per block"""
    return keygen(Scheme.AUB, s=2, rng=sampler("aub-keys"))


@pytest.fixture(scope="session")
def ppaub_keys():
    return keygen(Scheme.PPAUB, rng=sampler("ppaub-keys"))


@pytest.fixture(scope="session")
def aub_data():
    return file_bytes(300)


@pytest.fixture(scope="session")
def aub_file(aub_keys, aub_data):
    """300 bytes at 2 sectors of 31 bytes: n = 5 blocks"""
    return tag_file(aub_data, aub_keys, l=3, rng=sampler("aub-tag"))


@pytest.fixture(scope="session")
def ppaub_file(ppaub_keys):
    """160 bytes at 1 sector: n = 6 blocks"""
    return tag_file(file_bytes(160, "ppaub"), ppaub_keys, l=3, rng=sampler("ppaub-tag"))


@pytest.fixture(scope="session")
def trials(request):
    return request.config.getoption("--trials")


@pytest.fixture(scope="session")
def tagged_cell():
    """Factory for keys and an n-block file of s sectors, built once per shape"""

    @lru_cache(maxsize=None)
    def build(scheme, n, s=1):
        label = f"{scheme.value}-{n}-{s}"
        keys = keygen(scheme, s=s, rng=sampler(f"keys-{label}"))
        data = file_bytes(n * s * SECTOR_WIDTH_BYTES, f"cell-{label}")
        return keys, tag_file(data, keys, l=1, rng=sampler(f"tag-{label}"))

    return build


@pytest.fixture(scope="session")
def identities():
    return {
        name: SigKeypair.generate(name.encode("ascii").ljust(32, b"\x00"))
        for name in ("owner", "server", "auditor")
    }


@pytest.fixture
def terms():
    return ContractTerms(audit_count=2, c_s=100, c_a=50, deposit_s=200, deposit_a=200, dispute_window=3)


@pytest.fixture
def ledger():
    """Ledger with every identity funded"""
    chain = Ledger()
    chain.mint({"owner": 1000, "server": 1000, "auditor": 1000})
    return chain


@pytest.fixture
def small_config():
    """Small parameter set every scenario can run under"""
    return ScenarioConfig(
        scheme=Scheme.AUB, sectors=1, query_size=3, audit_count=2, file_size=256, dispute_window=3
    )
