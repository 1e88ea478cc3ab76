"""
Pairing crypto - BLS12-381 groups, hashing into groups, signatures and seeded sampling

Placement on the asymmetric curve: authenticator tags, block hashes and the u
generators live in G1; g and the public key v live in G2. Every check pairs a G1
product against g or v, so a verification is one multi-Miller loop and one final
exponentiation.
"""

import hashlib
import logging
import secrets
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, List, Optional, Sequence, Tuple, TypeAlias

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat
from py_ecc.bls.g2_primitives import (
    G1_to_pubkey,
    G2_to_signature,
    pubkey_to_G1,
    signature_to_G2,
)
from py_ecc.bls.hash_to_curve import hash_to_G1
from py_ecc.optimized_bls12_381 import (
    FQ12,
    G1,
    G2,
    Z1,
    add,
    b,
    curve_order,
    double,
    field_modulus,
    final_exponentiate,
    is_inf,
    is_on_curve,
    multiply,
    pairing,
)

from .errors import FormatError, ParameterError
from .utils import pack_fields, u64

logger = logging.getLogger(__name__)

Scalar: TypeAlias = int
G1Point: TypeAlias = Any
G2Point: TypeAlias = Any
GTElement: TypeAlias = FQ12

# Domain separation tags
DST_AUB_H = "AUB/H"
DST_PPAUB_H1 = "PPAUB/H1"
DST_PPAUB_H2 = "PPAUB/H2"
DST_QUERY_IDX = "QUERY/IDX"
DST_QUERY_COEF = "QUERY/COEF"
DST_QUERY_SIG = "QUERY/SIG"
DST_CHAN_MSG = "CHAN/MSG"

SCALAR_BYTES = (curve_order.bit_length() + 7) // 8
SECTOR_WIDTH_BYTES = (curve_order.bit_length() - 1) // 8
G1_BYTES = 48
G2_BYTES = 96
FQ_BYTES = 48
GT_BYTES = 12 * FQ_BYTES
SIGNATURE_BYTES = 64
VERIFY_KEY_BYTES = 32

_PIPPENGER_THRESHOLD = 8


@dataclass(frozen=True)
class PairingSuite:
    """The pairing-friendly curve the schemes are instantiated on"""

    curve_id: str = "BLS12-381"
    p: int = curve_order
    g1_gen: G1Point = G1
    g2_gen: G2Point = G2

    @property
    def sector_width_bytes(self) -> int:
        """Widest byte string whose integer value is always below p"""
        return (self.p.bit_length() - 1) // 8

    def pairing(self, p1: G1Point, q2: G2Point) -> GTElement:
        """e: G1 x G2 -> GT"""
        return pairing(q2, p1)

    def gt_one(self) -> GTElement:
        return FQ12.one()


DEFAULT_SUITE = PairingSuite()


# Scalars


def encode_scalar(value: Scalar) -> bytes:
    """Fixed-width big-endian encoding of a scalar in [0, p)"""
    if not 0 <= value < curve_order:
        raise ParameterError(f"Scalar out of range: {value}")
    return value.to_bytes(SCALAR_BYTES, "big")


def decode_scalar(data: bytes) -> Scalar:
    if len(data) != SCALAR_BYTES:
        raise FormatError(f"Scalar must be {SCALAR_BYTES} bytes, got {len(data)}")
    value = int.from_bytes(data, "big")
    if value >= curve_order:
        raise FormatError("Non-canonical scalar")
    return value


def encode_scalars(values: Sequence[Scalar]) -> bytes:
    return b"".join(encode_scalar(v) for v in values)


def decode_scalars(data: bytes) -> List[Scalar]:
    if len(data) % SCALAR_BYTES:
        raise FormatError("Scalar vector length is not a multiple of the scalar width")
    return [
        decode_scalar(data[off : off + SCALAR_BYTES]) for off in range(0, len(data), SCALAR_BYTES)
    ]


def random_scalar() -> Scalar:
    """Uniform nonzero scalar from the OS generator"""
    return secrets.randbelow(curve_order - 1) + 1


# Group elements


def encode_g1(point: G1Point) -> bytes:
    return bytes(G1_to_pubkey(point))


def decode_g1(data: bytes) -> G1Point:
    """Decompress a G1 point, checking curve and subgroup membership"""
    if len(data) != G1_BYTES:
        raise FormatError(f"G1 element must be {G1_BYTES} bytes, got {len(data)}")
    try:
        return pubkey_to_G1(data)
    except (ValueError, AssertionError) as e:
        raise FormatError(f"Invalid G1 element: {e}")


def encode_g2(point: G2Point) -> bytes:
    return bytes(G2_to_signature(point))


def decode_g2(data: bytes) -> G2Point:
    if len(data) != G2_BYTES:
        raise FormatError(f"G2 element must be {G2_BYTES} bytes, got {len(data)}")
    try:
        return signature_to_G2(data)
    except (ValueError, AssertionError) as e:
        raise FormatError(f"Invalid G2 element: {e}")


def encode_gt(elem: GTElement) -> bytes:
    """Twelve base-field coefficients, 48 bytes each, big-endian"""
    return b"".join(int(c).to_bytes(FQ_BYTES, "big") for c in elem.coeffs)


def decode_gt(data: bytes) -> GTElement:
    if len(data) != GT_BYTES:
        raise FormatError(f"GT element must be {GT_BYTES} bytes, got {len(data)}")
    coeffs = [int.from_bytes(data[off : off + FQ_BYTES], "big") for off in range(0, GT_BYTES, FQ_BYTES)]
    if any(c >= field_modulus for c in coeffs):
        raise FormatError("Non-canonical GT coefficient")
    elem = FQ12(coeffs)
    if elem == FQ12.zero():
        raise FormatError("GT element is zero")
    return elem


def is_valid_g1(point: G1Point) -> bool:
    try:
        return len(point) == 3 and bool(is_on_curve(point, b))
    except (TypeError, AttributeError):
        return False


def is_valid_gt(elem: Any) -> bool:
    return isinstance(elem, FQ12) and elem != FQ12.zero()


def g1_equal(a: G1Point, b_: G1Point) -> bool:
    return encode_g1(a) == encode_g1(b_)


def g1_multi_exp(points: Sequence[G1Point], scalars: Sequence[Scalar]) -> G1Point:
    """
    Compute sum(k_i * P_i) in G1.

    Small inputs use plain double-and-add per term; larger ones use bucketed
    windows (Pippenger), which is what keeps u_1..u_s products with s = 1000 cheap.

    Args:
        points: G1 points
        scalars: Matching scalars, reduced mod p

    Returns:
        The multi-exponentiation result (Z1 for empty input)
    """
    if len(points) != len(scalars):
        raise ParameterError("points and scalars differ in length")
    pairs = [(pt, k % curve_order) for pt, k in zip(points, scalars)]
    pairs = [(pt, k) for pt, k in pairs if k and not is_inf(pt)]
    if not pairs:
        return Z1
    if len(pairs) < _PIPPENGER_THRESHOLD:
        acc = Z1
        for pt, k in pairs:
            acc = add(acc, multiply(pt, k))
        return acc

    window = max(2, len(pairs).bit_length() - 2)
    mask = (1 << window) - 1
    windows = (curve_order.bit_length() + window - 1) // window
    result = Z1
    for w in reversed(range(windows)):
        for _ in range(window):
            result = double(result)
        buckets: List[Optional[G1Point]] = [None] * mask
        shift = w * window
        for pt, k in pairs:
            digit = (k >> shift) & mask
            if digit:
                slot = buckets[digit - 1]
                buckets[digit - 1] = pt if slot is None else add(slot, pt)
        running = Z1
        window_sum = Z1
        for bucket in reversed(buckets):
            if bucket is not None:
                running = add(running, bucket)
            window_sum = add(window_sum, running)
        result = add(result, window_sum)
    return result


def pairing_product(pairs: Sequence[Tuple[G1Point, G2Point]]) -> GTElement:
    """prod e(P_i, Q_i) with a single final exponentiation"""
    acc = FQ12.one()
    for p1, q2 in pairs:
        if is_inf(p1) or is_inf(q2):
            continue
        acc = acc * pairing(q2, p1, final_exponentiate=False)
    return final_exponentiate(acc)


def pairing_product_is_one(pairs: Sequence[Tuple[G1Point, G2Point]]) -> bool:
    return pairing_product(pairs) == FQ12.one()


# Hashing


@lru_cache(maxsize=65536)
def hash_to_g1(domain_tag: str, msg: bytes) -> G1Point:
    """
    Hash bytes to a G1 point under a domain separation tag.

    Uses the IETF hash-to-curve construction (SSWU, random oracle variant), so
    distinct tags give independent oracles.
    """
    if not domain_tag:
        raise ParameterError("domain_tag must be nonempty")
    dst = f"PORCHAIN-V1-{domain_tag}_BLS12381G1_XMD:SHA-256_SSWU_RO_".encode("ascii")
    return hash_to_G1(msg, dst, hashlib.sha256)


def hash_gt_to_scalar(elem: GTElement) -> Scalar:
    """H_2: GT -> Z_p, reduced from 64 bytes of SHAKE-256 output"""
    digest = hashlib.shake_256(pack_fields(DST_PPAUB_H2.encode("ascii"), encode_gt(elem))).digest(64)
    return int.from_bytes(digest, "big") % curve_order


# Signatures


@dataclass(frozen=True)
class SigKeypair:
    """Ed25519 signing identity as raw key bytes"""

    signing_key: bytes = field(repr=False)
    verify_key: bytes

    @classmethod
    def generate(cls, seed: Optional[bytes] = None) -> "SigKeypair":
        """New keypair; a 32-byte seed makes it deterministic"""
        if seed is None:
            private = Ed25519PrivateKey.generate()
        else:
            if len(seed) != 32:
                raise ParameterError("Signing key seed must be 32 bytes")
            private = Ed25519PrivateKey.from_private_bytes(seed)
        verify_key = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        raw = private.private_bytes_raw()
        return cls(signing_key=raw, verify_key=verify_key)


def sign(msg: bytes, key: SigKeypair) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(key.signing_key).sign(msg)


def sig_verify(msg: bytes, sig: bytes, verify_key: bytes) -> bool:
    """Verify an Ed25519 signature; malformed keys or signatures give False"""
    try:
        Ed25519PublicKey.from_public_bytes(verify_key).verify(sig, msg)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


# Deterministic sampling


@dataclass
class XofSampler:
    """
    Expandable output stream keyed by (seed, domain_tag).

    Blocks are SHA-256(len-prefixed tag, seed, counter), so the stream is the same
    on every machine and can be regenerated by the contract.
    """

    seed: bytes
    domain_tag: str
    counter: int = 0
    _buffer: bytearray = field(default_factory=bytearray, repr=False)

    def __post_init__(self) -> None:
        if len(self.seed) != 32:
            raise ParameterError(f"Sampler seed must be 32 bytes, got {len(self.seed)}")
        if not self.domain_tag or not self.domain_tag.isascii():
            raise ParameterError("Sampler domain_tag must be nonempty ASCII")

    def read(self, nbytes: int) -> bytes:
        tag = self.domain_tag.encode("ascii")
        while len(self._buffer) < nbytes:
            self._buffer += hashlib.sha256(pack_fields(tag, self.seed, u64(self.counter))).digest()
            self.counter += 1
        out = bytes(self._buffer[:nbytes])
        del self._buffer[:nbytes]
        return out

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection sampling"""
        if bound < 1:
            raise ParameterError(f"bound must be positive: {bound}")
        bits = (bound - 1).bit_length()
        nbytes = max(1, (bits + 7) // 8)
        mask = (1 << bits) - 1
        while True:
            candidate = int.from_bytes(self.read(nbytes), "big") & mask
            if candidate < bound:
                return candidate

    def scalar(self) -> Scalar:
        return self.below(curve_order)

    def nonzero_scalar(self) -> Scalar:
        while True:
            value = self.scalar()
            if value:
                return value


def draw_scalar(rng: Optional[XofSampler] = None) -> Scalar:
    """Nonzero scalar from a seeded sampler, or from the OS when rng is None"""
    return random_scalar() if rng is None else rng.nonzero_scalar()


def sample_scalars(sampler: XofSampler, count: int) -> List[Scalar]:
    if count < 0:
        raise ParameterError(f"count must be non-negative: {count}")
    return [sampler.scalar() for _ in range(count)]


def sample_distinct_indices(sampler: XofSampler, n: int, l: int) -> List[int]:
    """l distinct indices from [1, n], sorted ascending"""
    if not 1 <= l <= n:
        raise ParameterError(f"Query size must satisfy 1 <= l <= n, got l={l}, n={n}")
    chosen: set[int] = set()
    while len(chosen) < l:
        chosen.add(sampler.below(n) + 1)
    return sorted(chosen)

