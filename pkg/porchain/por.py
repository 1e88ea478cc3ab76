"""
PoR core - File sectoring, tags, queries, responses, verification and aggregation

Two schemes share one layout:

* AuB: sig_i = [H(i) * prod_j u_j^{m_ij}]^x, checked with
  e(sigma, g) == e(prod H(i)^{nu_i} * prod_j u_j^{mu_j}, v).
* PPAuB: sig_i = [H1(fileid || i) * u^{m_i}]^x with a masked response
  mu = r + gamma * sum(nu_i m_i), R = e(u, v)^r, gamma = H2(R), checked with
  R * e(sigma^gamma, g) == e((prod H1(W_i)^{nu_i})^gamma * u^mu, v).

Group operations are written additively (py_ecc), so "sigma^nu" is nu * sigma.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from py_ecc.optimized_bls12_381 import Z1, add, curve_order, multiply, neg

from .crypto import (
    DEFAULT_SUITE,
    DST_AUB_H,
    DST_PPAUB_H1,
    DST_QUERY_COEF,
    DST_QUERY_IDX,
    DST_QUERY_SIG,
    G1Point,
    G2Point,
    GTElement,
    PairingSuite,
    Scalar,
    SigKeypair,
    XofSampler,
    decode_g1,
    decode_gt,
    decode_scalar,
    decode_scalars,
    draw_scalar,
    encode_g1,
    encode_gt,
    encode_scalar,
    encode_scalars,
    g1_multi_exp,
    hash_gt_to_scalar,
    hash_to_g1,
    is_valid_g1,
    is_valid_gt,
    pairing_product,
    pairing_product_is_one,
    sample_distinct_indices,
    sample_scalars,
    sig_verify,
    sign,
)
from .errors import FormatError, ParameterError
from .models import PorParams, Scheme
from .utils import pack_fields, read_u64, sha256, u64, unpack_fields

logger = logging.getLogger(__name__)

Entry = Tuple[int, Scalar]

ENTRY_BYTES = 8 + 32


class VerifyCode(str, Enum):
    """Verification result; truthy only for OK"""

    OK = "ok"
    EQUATION_FAILED = "equation_failed"
    MALFORMED = "malformed"

    def __bool__(self) -> bool:
        return self is VerifyCode.OK


# Keys


@dataclass(frozen=True)
class PublicKeys:
    """What the owner hands to auditors: (g, v, u_1..u_s [, e(u, v)])"""

    scheme: Scheme
    g: G2Point
    v: G2Point
    u_vec: Tuple[G1Point, ...]
    e_uv: Optional[GTElement] = None

    @property
    def s(self) -> int:
        return len(self.u_vec)


@dataclass(frozen=True)
class OwnerKeys:
    """
    Owner key material.

    u_exponents holds the discrete logs of the u generators (u_j = alpha_j * G1).
    They never leave the owner and let tagging use one scalar multiplication per
    block instead of s of them.
    """

    scheme: Scheme
    sk: Scalar
    g: G2Point
    v: G2Point
    u_vec: Tuple[G1Point, ...]
    u_exponents: Tuple[Scalar, ...] = field(repr=False)
    e_uv: Optional[GTElement] = None

    @property
    def s(self) -> int:
        return len(self.u_vec)

    @property
    def public(self) -> PublicKeys:
        return PublicKeys(scheme=self.scheme, g=self.g, v=self.v, u_vec=self.u_vec, e_uv=self.e_uv)


def keygen_aub(
    suite: PairingSuite = DEFAULT_SUITE, s: int = 1, rng: Optional[XofSampler] = None
) -> OwnerKeys:
    """
    Generate AuB keys: x, v = x * g and s independent generators u_j.

    Args:
        suite: Pairing suite
        s: Sectors per block
        rng: Seeded sampler for reproducible keys; OS randomness when None

    Returns:
        OwnerKeys for AuB
    """
    if s < 1:
        raise ParameterError(f"Sector count must be at least 1: {s}")
    sk = draw_scalar(rng)
    exponents = tuple(draw_scalar(rng) for _ in range(s))
    u_vec = tuple(multiply(suite.g1_gen, a) for a in exponents)
    v = multiply(suite.g2_gen, sk)
    logger.debug(f"Generated AuB keys with {s} sectors")
    return OwnerKeys(
        scheme=Scheme.AUB, sk=sk, g=suite.g2_gen, v=v, u_vec=u_vec, u_exponents=exponents
    )


def keygen_ppaub(suite: PairingSuite = DEFAULT_SUITE, rng: Optional[XofSampler] = None) -> OwnerKeys:
    """Generate PPAuB keys: a single u and the precomputed e(u, v)"""
    sk = draw_scalar(rng)
    alpha = draw_scalar(rng)
    u = multiply(suite.g1_gen, alpha)
    v = multiply(suite.g2_gen, sk)
    e_uv = suite.pairing(u, v)
    return OwnerKeys(
        scheme=Scheme.PPAUB,
        sk=sk,
        g=suite.g2_gen,
        v=v,
        u_vec=(u,),
        u_exponents=(alpha,),
        e_uv=e_uv,
    )


def keygen(
    scheme: Scheme, suite: PairingSuite = DEFAULT_SUITE, s: int = 1, rng: Optional[XofSampler] = None
) -> OwnerKeys:
    if scheme == Scheme.AUB:
        return keygen_aub(suite, s, rng)
    return keygen_ppaub(suite, rng)


# Files


def chunk_file(data: bytes, params: PorParams) -> List[List[Scalar]]:
    """
    Split a file into n blocks of s sectors.

    Each sector is sector_width_bytes of big-endian data, so its value is below p.
    The final block is zero padded; params.byte_length keeps the true length.
    """
    if not data:
        raise ParameterError("Cannot chunk an empty file")
    if len(data) != params.byte_length:
        raise ParameterError(f"File length {len(data)} differs from params ({params.byte_length})")
    width = params.sector_width_bytes
    padded = data.ljust(params.n * params.block_bytes, b"\x00")
    blocks = []
    for i in range(params.n):
        base = i * params.block_bytes
        blocks.append(
            [
                int.from_bytes(padded[base + j * width : base + (j + 1) * width], "big")
                for j in range(params.s)
            ]
        )
    return blocks


def unchunk_file(blocks: Sequence[Sequence[Scalar]], params: PorParams) -> bytes:
    """Inverse of chunk_file, dropping the padding"""
    width = params.sector_width_bytes
    out = bytearray()
    try:
        for block in blocks:
            for sector in block:
                out += sector.to_bytes(width, "big")
    except OverflowError:
        raise ParameterError("Sector value exceeds the sector width")
    return bytes(out[: params.byte_length])


def block_digest(block: Sequence[Scalar], tag: G1Point) -> bytes:
    """h_i = H(m_i || sigma_i) over canonical encodings"""
    return sha256(encode_scalars(block) + encode_g1(tag))


def _h_aub(i: int) -> G1Point:
    return hash_to_g1(DST_AUB_H, u64(i))


def _h_ppaub(fileid: Scalar, i: int) -> G1Point:
    return hash_to_g1(DST_PPAUB_H1, encode_scalar(fileid) + u64(i))


def _sector_exponent(block: Sequence[Scalar], keys: OwnerKeys) -> Scalar:
    return sum(a * m for a, m in zip(keys.u_exponents, block)) % curve_order


def tag_block_aub(
    i: int, m_i: Sequence[Scalar], keys: OwnerKeys, suite: PairingSuite = DEFAULT_SUITE
) -> G1Point:
    """sigma_i = x * (H(i) + sum_j m_ij * u_j)"""
    if len(m_i) != keys.s:
        raise ParameterError(f"Block has {len(m_i)} sectors, keys expect {keys.s}")
    base = add(_h_aub(i), multiply(suite.g1_gen, _sector_exponent(m_i, keys)))
    return multiply(base, keys.sk)


def tag_block_ppaub(
    fileid: Scalar, i: int, m_i: Scalar, keys: OwnerKeys, suite: PairingSuite = DEFAULT_SUITE
) -> G1Point:
    """sigma_i = x * (H1(fileid || i) + m_i * u)"""
    base = add(_h_ppaub(fileid, i), multiply(suite.g1_gen, _sector_exponent([m_i], keys)))
    return multiply(base, keys.sk)


@dataclass
class TaggedFile:
    """Blocks, per-block tags and digests, plus the parameters they were made under"""

    params: PorParams
    blocks: List[List[Scalar]]
    tags: List[G1Point]
    digests: List[bytes]

    @property
    def n(self) -> int:
        return self.params.n

    def block(self, i: int) -> List[Scalar]:
        return self.blocks[i - 1]

    def tag(self, i: int) -> G1Point:
        return self.tags[i - 1]

    def to_bytes(self) -> bytes:
        return unchunk_file(self.blocks, self.params)


def tag_file(
    data: bytes,
    keys: OwnerKeys,
    l: int,
    rng: Optional[XofSampler] = None,
    suite: PairingSuite = DEFAULT_SUITE,
) -> TaggedFile:
    """
    Chunk and tag a whole file.

    Args:
        data: File contents
        keys: Owner keys; their scheme selects AuB or PPAuB tagging
        l: Query size recorded in the parameters
        rng: Sampler for the PPAuB fileid

    Returns:
        TaggedFile with digests h_i = H(m_i || sigma_i)
    """
    if not data:
        raise ParameterError("Cannot tag an empty file")
    fileid = draw_scalar(rng) if keys.scheme == Scheme.PPAUB else None
    params = PorParams.for_data(keys.scheme, len(data), s=keys.s, l=l, fileid=fileid)
    blocks = chunk_file(data, params)
    if keys.scheme == Scheme.AUB:
        tags = [tag_block_aub(i, m, keys, suite) for i, m in enumerate(blocks, start=1)]
    else:
        assert fileid is not None
        tags = [tag_block_ppaub(fileid, i, m[0], keys, suite) for i, m in enumerate(blocks, start=1)]
    digests = [block_digest(m, t) for m, t in zip(blocks, tags)]
    logger.info(f"Tagged {params.n} blocks ({params.scheme.value}, s={params.s})")
    return TaggedFile(params=params, blocks=blocks, tags=tags, digests=digests)


# Queries


@dataclass(frozen=True)
class Query:
    """An l-element challenge {(i, nu_i)} plus its position in a channel"""

    entries: Tuple[Entry, ...]
    seed: bytes
    seq: int
    sig: bytes = b""

    @property
    def indices(self) -> List[int]:
        return [i for i, _ in self.entries]

    def entries_bytes(self) -> bytes:
        return b"".join(u64(i) + encode_scalar(nu) for i, nu in self.entries)

    def signing_bytes(self, channel_id: bytes) -> bytes:
        return pack_fields(
            DST_QUERY_SIG.encode("ascii"), self.entries_bytes(), self.seed, u64(self.seq), channel_id
        )

    def signed(self, key: SigKeypair, channel_id: bytes) -> "Query":
        return replace(self, sig=sign(self.signing_bytes(channel_id), key))

    def verify_signature(self, verify_key: bytes, channel_id: bytes) -> bool:
        return sig_verify(self.signing_bytes(channel_id), self.sig, verify_key)

    def record_bytes(self) -> bytes:
        """Per-query record of a close payload (the seed travels once in the header)"""
        return pack_fields(self.entries_bytes(), u64(self.seq), self.sig)

    def encode(self) -> bytes:
        return pack_fields(self.entries_bytes(), self.seed, u64(self.seq), self.sig)

    @classmethod
    def decode(cls, data: bytes) -> "Query":
        entries_raw, seed, seq, sig = unpack_fields(data, 4)
        return cls(entries=decode_entries(entries_raw), seed=seed, seq=read_u64(seq), sig=sig)

    @classmethod
    def from_record(cls, data: bytes, seed: bytes) -> "Query":
        entries_raw, seq, sig = unpack_fields(data, 3)
        return cls(entries=decode_entries(entries_raw), seed=seed, seq=read_u64(seq), sig=sig)


def decode_entries(data: bytes) -> Tuple[Entry, ...]:
    if len(data) % ENTRY_BYTES:
        raise FormatError("Query entries have a non-integral length")
    entries = []
    for off in range(0, len(data), ENTRY_BYTES):
        i = int.from_bytes(data[off : off + 8], "big")
        entries.append((i, decode_scalar(data[off + 8 : off + ENTRY_BYTES])))
    return tuple(entries)


def query_seed(seed: bytes, seq: int) -> bytes:
    return sha256(pack_fields(seed, u64(seq)))


def gen_query(seed: bytes, params: PorParams, seq: int) -> Query:
    """
    Deterministic query number seq of a channel seeded by h_b.

    Indices and coefficients come from two samplers keyed by H(seed || seq), so
    anyone holding h_b (the contract included) regenerates the same query.
    """
    if not 1 <= params.l <= params.n:
        raise ParameterError(f"Query size must satisfy 1 <= l <= n, got l={params.l}, n={params.n}")
    material = query_seed(seed, seq)
    indices = sample_distinct_indices(XofSampler(material, DST_QUERY_IDX), params.n, params.l)
    coefficients = sample_scalars(XofSampler(material, DST_QUERY_COEF), params.l)
    return Query(entries=tuple(zip(indices, coefficients)), seed=seed, seq=seq)


def collect_entries(queries: Iterable[Query]) -> List[Entry]:
    """Multiset union of the entries of several queries"""
    entries: List[Entry] = []
    for q in queries:
        entries.extend(q.entries)
    return entries


def _merge(entries: Iterable[Entry]) -> Dict[int, Scalar]:
    merged: Dict[int, Scalar] = {}
    for i, nu in entries:
        merged[i] = (merged.get(i, 0) + nu) % curve_order
    return merged


# Responses


@dataclass(frozen=True)
class PorResponse:
    """(sigma, mu_vec [, R]) plus the server's signature over it"""

    sigma: G1Point
    mu_vec: Tuple[Scalar, ...]
    R: Optional[GTElement] = None
    server_sig: bytes = b""

    def proof_bytes(self) -> bytes:
        r_bytes = encode_gt(self.R) if self.R is not None else b""
        return pack_fields(encode_g1(self.sigma), encode_scalars(self.mu_vec), r_bytes)

    def signing_bytes(self, channel_id: bytes, seq: int) -> bytes:
        return pack_fields(b"RESPONSE", channel_id, u64(seq), self.proof_bytes())

    def signed(self, key: SigKeypair, channel_id: bytes, seq: int) -> "PorResponse":
        return replace(self, server_sig=sign(self.signing_bytes(channel_id, seq), key))

    def verify_signature(self, verify_key: bytes, channel_id: bytes, seq: int) -> bool:
        return sig_verify(self.signing_bytes(channel_id, seq), self.server_sig, verify_key)

    def encode(self) -> bytes:
        return pack_fields(self.proof_bytes(), self.server_sig)

    @classmethod
    def decode(cls, data: bytes) -> "PorResponse":
        proof, sig = unpack_fields(data, 2)
        return cls.from_proof_bytes(proof, sig)

    @classmethod
    def from_proof_bytes(cls, proof: bytes, sig: bytes = b"") -> "PorResponse":
        sigma_raw, mu_raw, r_raw = unpack_fields(proof, 3)
        mu_vec = tuple(decode_scalars(mu_raw))
        if not mu_vec:
            raise FormatError("Response carries no mu")
        return cls(
            sigma=decode_g1(sigma_raw),
            mu_vec=mu_vec,
            R=decode_gt(r_raw) if r_raw else None,
            server_sig=sig,
        )


def _check_indices(query: Query, n: int) -> None:
    for i, _ in query.entries:
        if not 1 <= i <= n:
            raise ParameterError(f"Query index {i} outside [1, {n}]")


def gen_response_aub(query: Query, file: TaggedFile) -> PorResponse:
    """sigma = sum nu_i * sigma_i; mu_j = sum nu_i * m_ij mod p"""
    _check_indices(query, file.n)
    sigma = g1_multi_exp([file.tag(i) for i, _ in query.entries], [nu for _, nu in query.entries])
    mu_vec = tuple(
        sum(nu * file.block(i)[j] for i, nu in query.entries) % curve_order
        for j in range(file.params.s)
    )
    return PorResponse(sigma=sigma, mu_vec=mu_vec)


def _ppaub_response(
    query: Query, file: TaggedFile, public: PublicKeys, r: Scalar, include_r: bool
) -> PorResponse:
    _check_indices(query, file.n)
    if public.e_uv is None:
        raise ParameterError("PPAuB public keys lack e(u, v)")
    R = public.e_uv**r
    gamma = hash_gt_to_scalar(R)
    sigma = g1_multi_exp([file.tag(i) for i, _ in query.entries], [nu for _, nu in query.entries])
    blinded = sum(nu * file.block(i)[0] for i, nu in query.entries) % curve_order
    mu = ((r if include_r else 0) + gamma * blinded) % curve_order
    return PorResponse(sigma=sigma, mu_vec=(mu,), R=R)


def gen_response_ppaub(
    query: Query,
    file: TaggedFile,
    public: PublicKeys,
    first_flag: bool,
    r: Optional[Scalar] = None,
    rng: Optional[XofSampler] = None,
) -> Tuple[PorResponse, Scalar]:
    """
    Masked PPAuB response.

    The first response of a channel draws r and carries it inside mu; later ones
    reuse the same r (hence the same R and gamma) and leave it out, so the channel
    aggregate holds r exactly once.

    Args:
        query: Challenge
        file: Tagged file
        public: Public keys (e(u, v) is needed for R)
        first_flag: True for the first response of the session
        r: Session randomness, required when first_flag is False
        rng: Sampler used to draw r on the first response

    Returns:
        (response, r) so the caller can keep r for the session
    """
    if first_flag:
        if r is not None:
            raise ParameterError("First response draws its own r")
        r = draw_scalar(rng)
    elif r is None:
        raise ParameterError("Non-first response needs the session r")
    return _ppaub_response(query, file, public, r, include_r=first_flag), r


def rebuttal_response_ppaub(
    query: Query, file: TaggedFile, public: PublicKeys, r: Scalar
) -> PorResponse:
    """Standalone proof for one disputed query: mu includes r so it verifies alone"""
    return _ppaub_response(query, file, public, r, include_r=True)


# Verification


def verify_aub(
    entries: Iterable[Entry],
    sigma: G1Point,
    mu_vec: Sequence[Scalar],
    public: PublicKeys,
    n: Optional[int] = None,
) -> VerifyCode:
    """
    Check e(sigma, g) == e(sum nu_i H(i) + sum mu_j u_j, v) over the entries.

    Args:
        entries: (i, nu_i) pairs; a multiset union for aggregates
        sigma: Aggregated tag
        mu_vec: One mu per sector
        public: AuB public keys
        n: Block count, when known, to reject out-of-range indices

    Returns:
        VerifyCode.OK, EQUATION_FAILED or MALFORMED
    """
    try:
        merged = _merge(entries)
        if public.scheme != Scheme.AUB or len(mu_vec) != public.s:
            return VerifyCode.MALFORMED
        if any(not 0 <= mu < curve_order for mu in mu_vec) or not is_valid_g1(sigma):
            return VerifyCode.MALFORMED
        if n is not None and any(not 1 <= i <= n for i in merged):
            return VerifyCode.MALFORMED
        hashed = g1_multi_exp([_h_aub(i) for i in merged], list(merged.values()))
        combined = add(hashed, g1_multi_exp(list(public.u_vec), list(mu_vec)))
        ok = pairing_product_is_one([(sigma, public.g), (neg(combined), public.v)])
    except (ValueError, TypeError, AssertionError, IndexError, AttributeError) as e:
        logger.debug(f"Malformed AuB proof: {e}")
        return VerifyCode.MALFORMED
    return VerifyCode.OK if ok else VerifyCode.EQUATION_FAILED


def verify_ppaub(
    entries: Iterable[Entry],
    sigma: G1Point,
    mu: Scalar,
    R: GTElement,
    fileid: Scalar,
    public: PublicKeys,
    n: Optional[int] = None,
) -> VerifyCode:
    """
    Check R * e(gamma * sigma, g) == e(gamma * sum nu_i H1(W_i) + mu * u, v).

    gamma is always recomputed as H2(R).
    """
    try:
        merged = _merge(entries)
        if public.scheme != Scheme.PPAUB or public.s != 1:
            return VerifyCode.MALFORMED
        if not 0 <= mu < curve_order or not is_valid_g1(sigma) or not is_valid_gt(R):
            return VerifyCode.MALFORMED
        if n is not None and any(not 1 <= i <= n for i in merged):
            return VerifyCode.MALFORMED
        gamma = hash_gt_to_scalar(R)
        hashed = g1_multi_exp([_h_ppaub(fileid, i) for i in merged], list(merged.values()))
        rhs = add(multiply(hashed, gamma), multiply(public.u_vec[0], mu))
        ratio = pairing_product([(multiply(sigma, gamma), public.g), (neg(rhs), public.v)])
        ok = R * ratio == DEFAULT_SUITE.gt_one()
    except (ValueError, TypeError, AssertionError, IndexError, AttributeError) as e:
        logger.debug(f"Malformed PPAuB proof: {e}")
        return VerifyCode.MALFORMED
    return VerifyCode.OK if ok else VerifyCode.EQUATION_FAILED


def verify_response(
    scheme: Scheme,
    entries: Iterable[Entry],
    response: PorResponse,
    public: PublicKeys,
    params: PorParams,
) -> VerifyCode:
    """Dispatch to verify_aub or verify_ppaub for a response-shaped proof"""
    if scheme == Scheme.AUB:
        if response.R is not None:
            return VerifyCode.MALFORMED
        return verify_aub(entries, response.sigma, response.mu_vec, public, params.n)
    if response.R is None or len(response.mu_vec) != 1 or params.fileid is None:
        return VerifyCode.MALFORMED
    return verify_ppaub(
        entries, response.sigma, response.mu_vec[0], response.R, params.fileid, public, params.n
    )


# Aggregation


@dataclass(frozen=True)
class Accumulator:
    """Session aggregate (Q_all, sigma_all, mu_all [, R])"""

    scheme: Scheme
    entries: Tuple[Entry, ...]
    sigma: G1Point
    mu_vec: Tuple[Scalar, ...]
    R: Optional[GTElement] = None

    @classmethod
    def empty(cls, scheme: Scheme, s: int = 1) -> "Accumulator":
        return cls(scheme=scheme, entries=(), sigma=Z1, mu_vec=(0,) * s)

    def as_response(self) -> PorResponse:
        return PorResponse(sigma=self.sigma, mu_vec=self.mu_vec, R=self.R)

    def digest(self) -> bytes:
        """Commitment to the aggregate carried in acknowledgements"""
        return accumulator_digest(self.sigma, self.mu_vec, self.R)


def accumulator_digest(sigma: G1Point, mu_vec: Sequence[Scalar], R: Optional[GTElement]) -> bytes:
    r_bytes = encode_gt(R) if R is not None else b""
    return sha256(pack_fields(b"ACC", encode_g1(sigma), encode_scalars(mu_vec), r_bytes))


def aggregate(acc: Accumulator, query: Query, resp: PorResponse) -> Accumulator:
    """
    Fold one response into the session aggregate.

    Raises:
        ParameterError: When the response shape does not match the accumulator scheme
    """
    if (acc.scheme == Scheme.PPAUB) != (resp.R is not None):
        raise ParameterError("Response scheme does not match the accumulator")
    if len(resp.mu_vec) != len(acc.mu_vec):
        raise ParameterError("Response sector count does not match the accumulator")
    return Accumulator(
        scheme=acc.scheme,
        entries=acc.entries + tuple(query.entries),
        sigma=add(acc.sigma, resp.sigma),
        mu_vec=tuple((a + b) % curve_order for a, b in zip(acc.mu_vec, resp.mu_vec)),
        R=acc.R if acc.R is not None else resp.R,
    )


def detection_probability(n: int, l: int, queries: int, corrupted: int = 1) -> float:
    """
    Chance that at least one of `queries` independent l-subsets hits a corrupted block.

    1 - (C(n - d, l) / C(n, l)) ** queries
    """
    if not 1 <= l <= n or not 0 <= corrupted <= n or queries < 0:
        raise ParameterError("Need 1 <= l <= n, 0 <= corrupted <= n and queries >= 0")
    miss = math.comb(n - corrupted, l) / math.comb(n, l)
    return 1.0 - miss**queries
