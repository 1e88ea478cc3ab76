"""
Randomized property checks over file shapes: honest proofs verify, single
mutations are caught, session aggregates agree with per-query checks and PPAuB
masking hides mu.

Cells with s=1000 sectors or n=64 blocks are marked slow. The trial count per
cell comes from --trials.
"""

import pytest
from py_ecc.optimized_bls12_381 import G1, Z1, add, multiply

from porchain.crypto import curve_order
from porchain.models import Scheme
from porchain.por import (
    Accumulator,
    PorResponse,
    TaggedFile,
    VerifyCode,
    aggregate,
    gen_query,
    gen_response_aub,
    gen_response_ppaub,
    rebuttal_response_ppaub,
    verify_response,
)

from conftest import sampler

MASKING_RESPONSES = 100


def shape(n, s):
    marks = [pytest.mark.slow] if s > 1 or n > 16 else []
    return pytest.param(n, s, marks=marks, id=f"n{n}-s{s}")


AUB_GRID = [shape(n, s) for s in (1, 1000) for n in (1, 4, 16, 64)]
PPAUB_GRID = [shape(n, 1) for n in (1, 4, 16, 64)]


def random_query(file, rng, seq):
    """Query with a random size 1 <= l <= n under a fresh seed"""
    params = file.params.model_copy(update={"l": 1 + rng.below(file.n)})
    return gen_query(rng.read(32), params, seq)


def respond(q, file, public, rng):
    if file.params.scheme == Scheme.AUB:
        return gen_response_aub(q, file)
    return gen_response_ppaub(q, file, public, True, rng=rng)[0]


def verifies(q, resp, public, params):
    return verify_response(params.scheme, q.entries, resp, public, params) == VerifyCode.OK


def altered(file, blocks=None, tags=None):
    return TaggedFile(
        params=file.params,
        blocks=blocks if blocks is not None else [list(b) for b in file.blocks],
        tags=tags if tags is not None else list(file.tags),
        digests=list(file.digests),
    )


class TestHonestProofs:
    """Test honest responses verify for random queries"""

    @pytest.mark.parametrize("n,s", AUB_GRID)
    def test_aub(self, n, s, tagged_cell, trials):
        keys, file = tagged_cell(Scheme.AUB, n, s)
        rng = sampler(f"honest-aub-{n}-{s}")
        for t in range(trials):
            q = random_query(file, rng, t)
            assert verifies(q, gen_response_aub(q, file), keys.public, file.params), f"trial {t}"

    @pytest.mark.parametrize("n,s", PPAUB_GRID)
    def test_ppaub(self, n, s, tagged_cell, trials):
        keys, file = tagged_cell(Scheme.PPAUB, n, s)
        rng = sampler(f"honest-ppaub-{n}")
        for t in range(trials):
            q = random_query(file, rng, t)
            resp = respond(q, file, keys.public, rng)
            assert verifies(q, resp, keys.public, file.params), f"trial {t}"


class TestTamperDetection:
    """Test a single mutated sector, tag, mu, sigma or R fails verification"""

    def tamper(self, target, q, file, public, rng):
        i = q.indices[rng.below(len(q.entries))]
        delta = rng.nonzero_scalar()
        if target == "sector":
            blocks = [list(b) for b in file.blocks]
            j = rng.below(file.params.s)
            blocks[i - 1][j] = (blocks[i - 1][j] + delta) % curve_order
            return respond(q, altered(file, blocks=blocks), public, rng)
        if target == "tag":
            tags = list(file.tags)
            tags[i - 1] = add(tags[i - 1], multiply(G1, delta))
            return respond(q, altered(file, tags=tags), public, rng)

        resp = respond(q, file, public, rng)
        if target == "mu":
            mu = list(resp.mu_vec)
            j = rng.below(len(mu))
            mu[j] = (mu[j] + delta) % curve_order
            return PorResponse(sigma=resp.sigma, mu_vec=tuple(mu), R=resp.R)
        if target == "sigma":
            return PorResponse(sigma=add(resp.sigma, multiply(G1, delta)), mu_vec=resp.mu_vec, R=resp.R)
        return PorResponse(sigma=resp.sigma, mu_vec=resp.mu_vec, R=resp.R * public.e_uv)

    @pytest.mark.parametrize("target", ["sector", "tag", "mu", "sigma"])
    def test_aub(self, target, aub_file, aub_keys, trials):
        rng = sampler(f"tamper-aub-{target}")
        for t in range(trials):
            q = random_query(aub_file, rng, t)
            resp = self.tamper(target, q, aub_file, aub_keys.public, rng)
            assert not verifies(q, resp, aub_keys.public, aub_file.params), f"trial {t}"

    @pytest.mark.parametrize("target", ["sector", "tag", "mu", "sigma", "R"])
    def test_ppaub(self, target, ppaub_file, ppaub_keys, trials):
        rng = sampler(f"tamper-ppaub-{target}")
        for t in range(trials):
            q = random_query(ppaub_file, rng, t)
            resp = self.tamper(target, q, ppaub_file, ppaub_keys.public, rng)
            assert not verifies(q, resp, ppaub_keys.public, ppaub_file.params), f"trial {t}"


@pytest.mark.slow
class TestAggregateAgreement:
    """Test the session aggregate verifies exactly when every query does on its own"""

    def served(self, file, rng):
        """Half of the trials serve from a file that lost one block"""
        if rng.below(2):
            return file
        lost = 1 + rng.below(file.n)
        blocks = [list(b) for b in file.blocks]
        tags = list(file.tags)
        blocks[lost - 1] = [0] * file.params.s
        tags[lost - 1] = Z1
        return altered(file, blocks=blocks, tags=tags)

    def queries(self, file, rng):
        params = file.params.model_copy(update={"l": 1 + rng.below(8)})
        seed = rng.read(32)
        return [gen_query(seed, params, seq) for seq in range(1 + rng.below(10))]

    def test_aub(self, tagged_cell, trials):
        keys, file = tagged_cell(Scheme.AUB, 32, 1)
        rng = sampler("aggregate-aub")
        for t in range(trials):
            served, queries = self.served(file, rng), self.queries(file, rng)
            acc = Accumulator.empty(Scheme.AUB, 1)
            each = []
            for q in queries:
                resp = gen_response_aub(q, served)
                acc = aggregate(acc, q, resp)
                each.append(verifies(q, resp, keys.public, file.params))
            whole = verify_response(Scheme.AUB, acc.entries, acc.as_response(), keys.public, file.params)
            assert (whole == VerifyCode.OK) == all(each), f"trial {t}"

    def test_ppaub(self, tagged_cell, trials):
        keys, file = tagged_cell(Scheme.PPAUB, 32, 1)
        public = keys.public
        rng = sampler("aggregate-ppaub")
        for t in range(trials):
            served, queries = self.served(file, rng), self.queries(file, rng)
            first, r = gen_response_ppaub(queries[0], served, public, True, rng=rng)
            acc = aggregate(Accumulator.empty(Scheme.PPAUB), queries[0], first)
            for q in queries[1:]:
                acc = aggregate(acc, q, gen_response_ppaub(q, served, public, False, r=r)[0])
            each = [
                verifies(q, rebuttal_response_ppaub(q, served, public, r), public, file.params)
                for q in queries
            ]
            whole = verify_response(Scheme.PPAUB, acc.entries, acc.as_response(), public, file.params)
            assert (whole == VerifyCode.OK) == all(each), f"trial {t}"


@pytest.mark.slow
class TestMasking:
    """Test fresh r masks mu while AuB mu stays fixed for a fixed query"""

    def test_ppaub_mu_distinct(self, ppaub_file, ppaub_keys):
        q = gen_query(b"\x44" * 32, ppaub_file.params, 0)
        rng = sampler("masking")
        responses = [
            gen_response_ppaub(q, ppaub_file, ppaub_keys.public, True, rng=rng)[0]
            for _ in range(MASKING_RESPONSES)
        ]
        assert len({resp.mu_vec[0] for resp in responses}) == MASKING_RESPONSES
        assert sum(verifies(q, resp, ppaub_keys.public, ppaub_file.params) for resp in responses) == MASKING_RESPONSES

    def test_aub_mu_constant(self, aub_file):
        q = gen_query(b"\x44" * 32, aub_file.params, 0)
        assert len({gen_response_aub(q, aub_file).mu_vec for _ in range(MASKING_RESPONSES)}) == 1
