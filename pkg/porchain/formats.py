"""
File formats - Versioned binary encodings for keys, tags, block stores and transaction logs

Every file starts with a 4-byte magic and a 1-byte version followed by a
pack_fields body:

    PORK  owner secret keys
    PORP  public keys
    PORT  tags and digests of one file, with its parameters
    PORB  block store (sector matrix)
    PORL  transaction log, one length-prefixed canonical transaction per entry
"""

import logging
from pathlib import Path
from typing import Iterable, List, Tuple

from .crypto import (
    G1_BYTES,
    SCALAR_BYTES,
    decode_g1,
    decode_g2,
    decode_gt,
    decode_scalar,
    decode_scalars,
    encode_g1,
    encode_g2,
    encode_gt,
    encode_scalar,
    encode_scalars,
)
from .errors import FormatError
from .models import PorParams, Scheme, Transaction
from .por import OwnerKeys, PublicKeys, TaggedFile, block_digest
from .utils import pack_fields, read_u64, sha256, u64, unpack_fields

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

MAGIC_OWNER_KEYS = b"PORK"
MAGIC_PUBLIC_KEYS = b"PORP"
MAGIC_TAGS = b"PORT"
MAGIC_BLOCKS = b"PORB"
MAGIC_TX_LOG = b"PORL"

OWNER_KEY_FILE = "owner.key"
PUBLIC_KEY_FILE = "public.key"


def _wrap(magic: bytes, body: bytes) -> bytes:
    return magic + bytes([FORMAT_VERSION]) + body


def _unwrap(magic: bytes, data: bytes) -> bytes:
    if len(data) < 5:
        raise FormatError("File too short for a header")
    if data[:4] != magic:
        raise FormatError(f"Bad magic: expected {magic!r}, found {data[:4]!r}")
    if data[4] != FORMAT_VERSION:
        raise FormatError(f"Unsupported format version {data[4]}")
    return data[5:]


def _scheme(raw: bytes) -> Scheme:
    try:
        return Scheme(raw.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise FormatError(f"Unknown scheme identifier: {raw!r}")


def _split(data: bytes, width: int) -> List[bytes]:
    if len(data) % width:
        raise FormatError(f"Element list length is not a multiple of {width}")
    return [data[off : off + width] for off in range(0, len(data), width)]


# Keys


def dump_public_keys(public: PublicKeys) -> bytes:
    e_uv = encode_gt(public.e_uv) if public.e_uv is not None else b""
    body = pack_fields(
        public.scheme.value.encode("ascii"),
        encode_g2(public.g),
        encode_g2(public.v),
        b"".join(encode_g1(u) for u in public.u_vec),
        e_uv,
    )
    return _wrap(MAGIC_PUBLIC_KEYS, body)


def load_public_keys(data: bytes) -> PublicKeys:
    scheme_raw, g, v, u_raw, e_uv = unpack_fields(_unwrap(MAGIC_PUBLIC_KEYS, data), 5)
    u_vec = tuple(decode_g1(chunk) for chunk in _split(u_raw, G1_BYTES))
    if not u_vec:
        raise FormatError("Public keys carry no u generator")
    return PublicKeys(
        scheme=_scheme(scheme_raw),
        g=decode_g2(g),
        v=decode_g2(v),
        u_vec=u_vec,
        e_uv=decode_gt(e_uv) if e_uv else None,
    )


def dump_owner_keys(keys: OwnerKeys) -> bytes:
    e_uv = encode_gt(keys.e_uv) if keys.e_uv is not None else b""
    body = pack_fields(
        keys.scheme.value.encode("ascii"),
        encode_scalar(keys.sk),
        encode_g2(keys.g),
        encode_g2(keys.v),
        b"".join(encode_g1(u) for u in keys.u_vec),
        encode_scalars(keys.u_exponents),
        e_uv,
    )
    return _wrap(MAGIC_OWNER_KEYS, body)


def load_owner_keys(data: bytes) -> OwnerKeys:
    scheme_raw, sk, g, v, u_raw, exps, e_uv = unpack_fields(_unwrap(MAGIC_OWNER_KEYS, data), 7)
    u_vec = tuple(decode_g1(chunk) for chunk in _split(u_raw, G1_BYTES))
    exponents = tuple(decode_scalars(exps))
    if not u_vec or len(u_vec) != len(exponents):
        raise FormatError("Owner keys have inconsistent generator counts")
    return OwnerKeys(
        scheme=_scheme(scheme_raw),
        sk=decode_scalar(sk),
        g=decode_g2(g),
        v=decode_g2(v),
        u_vec=u_vec,
        u_exponents=exponents,
        e_uv=decode_gt(e_uv) if e_uv else None,
    )


def public_params_digest(public: PublicKeys) -> str:
    """Hex fingerprint of the public key file"""
    return sha256(dump_public_keys(public)).hex()


def write_key_files(keys: OwnerKeys, out_dir: Path) -> Tuple[Path, Path]:
    """
    Write owner.key and public.key into out_dir.

    Returns:
        Paths of the owner and public key files
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    owner_path = out_dir / OWNER_KEY_FILE
    public_path = out_dir / PUBLIC_KEY_FILE
    owner_path.write_bytes(dump_owner_keys(keys))
    public_path.write_bytes(dump_public_keys(keys.public))
    logger.info(f"Wrote {keys.scheme.value} keys with {keys.s} generators to {out_dir}")
    return owner_path, public_path


# Tags and blocks


def _dump_params(params: PorParams) -> List[bytes]:
    fileid = encode_scalar(params.fileid) if params.fileid is not None else b""
    return [
        params.scheme.value.encode("ascii"),
        u64(params.n),
        u64(params.s),
        u64(params.sector_width_bytes),
        u64(params.l),
        u64(params.byte_length),
        fileid,
    ]


def _load_params(fields: List[bytes]) -> PorParams:
    scheme_raw, n, s, width, l, byte_length, fileid = fields
    try:
        return PorParams(
            scheme=_scheme(scheme_raw),
            n=read_u64(n),
            s=read_u64(s),
            sector_width_bytes=read_u64(width),
            l=read_u64(l),
            byte_length=read_u64(byte_length),
            fileid=decode_scalar(fileid) if fileid else None,
        )
    except ValueError as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"Invalid parameters in header: {e}")


def dump_tag_file(file: TaggedFile) -> bytes:
    body = pack_fields(
        *_dump_params(file.params),
        b"".join(encode_g1(t) for t in file.tags),
        b"".join(file.digests),
    )
    return _wrap(MAGIC_TAGS, body)


def load_tag_file(data: bytes) -> Tuple[PorParams, List, List[bytes]]:
    """Returns (params, tags, digests)"""
    fields = unpack_fields(_unwrap(MAGIC_TAGS, data), 9)
    params = _load_params(fields[:7])
    tags = [decode_g1(chunk) for chunk in _split(fields[7], G1_BYTES)]
    digests = _split(fields[8], 32)
    if len(tags) != params.n or len(digests) != params.n:
        raise FormatError(f"Expected {params.n} tags and digests")
    return params, tags, digests


def dump_blocks(blocks: Iterable[Iterable[int]], params: PorParams) -> bytes:
    flat = b"".join(encode_scalars(list(block)) for block in blocks)
    return _wrap(MAGIC_BLOCKS, pack_fields(u64(params.n), u64(params.s), flat))


def load_blocks(data: bytes) -> List[List[int]]:
    n_raw, s_raw, flat = unpack_fields(_unwrap(MAGIC_BLOCKS, data), 3)
    n, s = read_u64(n_raw), read_u64(s_raw)
    if s < 1 or len(flat) != n * s * SCALAR_BYTES:
        raise FormatError("Block store size does not match its header")
    scalars = decode_scalars(flat)
    return [scalars[i * s : (i + 1) * s] for i in range(n)]


def load_tagged_file(tag_data: bytes, block_data: bytes, verify_digests: bool = True) -> TaggedFile:
    """Rebuild a TaggedFile from its tag and block files"""
    params, tags, digests = load_tag_file(tag_data)
    blocks = load_blocks(block_data)
    if len(blocks) != params.n or any(len(b) != params.s for b in blocks):
        raise FormatError("Block store does not match the tag file")
    if verify_digests:
        bad = [i for i, (m, t, h) in enumerate(zip(blocks, tags, digests), 1) if block_digest(m, t) != h]
        if bad:
            logger.warning(f"Stored blocks disagree with their digests at {bad}")
    return TaggedFile(params=params, blocks=blocks, tags=tags, digests=digests)


# Transaction log


def dump_tx_log(txs: Iterable[Transaction]) -> bytes:
    return _wrap(MAGIC_TX_LOG, pack_fields(*(tx.encode() for tx in txs)))


def load_tx_log(data: bytes) -> List[Transaction]:
    entries = unpack_fields(_unwrap(MAGIC_TX_LOG, data))
    try:
        return [Transaction.decode(raw) for raw in entries]
    except ValueError as e:
        raise FormatError(f"Invalid transaction in log: {e}")
