"""
Utilities - Canonical byte encodings, seeds and argument parsing helpers
"""

import hashlib
import json
import re
import secrets
from typing import Any, Dict, List, Optional

from .errors import FormatError, ParameterError

LENGTH_PREFIX_BYTES = 4

_SIZE_UNITS = {"": 1, "B": 1, "K": 1024, "M": 1024**2, "G": 1024**3}


def pack_fields(*fields: bytes) -> bytes:
    """
    Length-prefix and concatenate byte fields.

    Every field is preceded by its length as a 4-byte big-endian integer. This is
    the encoding all signed messages use, so equal field lists always give equal
    bytes.

    Args:
        fields: Byte strings in their fixed order

    Returns:
        Canonical concatenation
    """
    out = bytearray()
    for item in fields:
        out += len(item).to_bytes(LENGTH_PREFIX_BYTES, "big")
        out += item
    return bytes(out)


def unpack_fields(data: bytes, count: Optional[int] = None) -> List[bytes]:
    """
    Split a pack_fields encoding back into its fields.

    Args:
        data: Encoded bytes
        count: Expected number of fields, checked when given

    Returns:
        List of fields

    Raises:
        FormatError: On truncated input or a field count mismatch
    """
    fields: List[bytes] = []
    offset = 0
    while offset < len(data):
        if offset + LENGTH_PREFIX_BYTES > len(data):
            raise FormatError("Truncated length prefix")
        size = int.from_bytes(data[offset : offset + LENGTH_PREFIX_BYTES], "big")
        offset += LENGTH_PREFIX_BYTES
        if offset + size > len(data):
            raise FormatError("Truncated field")
        fields.append(bytes(data[offset : offset + size]))
        offset += size
    if count is not None and len(fields) != count:
        raise FormatError(f"Expected {count} fields, found {len(fields)}")
    return fields


def u64(value: int) -> bytes:
    """8-byte big-endian encoding of a non-negative integer"""
    if not 0 <= value < 2**64:
        raise ParameterError(f"Value out of u64 range: {value}")
    return value.to_bytes(8, "big")


def read_u64(data: bytes) -> int:
    if len(data) != 8:
        raise FormatError(f"Expected 8 bytes, got {len(data)}")
    return int.from_bytes(data, "big")


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def derive_seed(master: bytes, label: str) -> bytes:
    """Derive an independent 32-byte seed for one purpose from a master seed"""
    return sha256(pack_fields(b"porchain/seed", label.encode("ascii"), master))


def parse_seed(seed_hex: Optional[str]) -> bytes:
    """
    Turn a hex seed into 32 bytes of seed material.

    Args:
        seed_hex: Hex string, or None for a fresh random seed

    Returns:
        32-byte seed
    """
    if seed_hex is None:
        return secrets.token_bytes(32)
    try:
        raw = bytes.fromhex(seed_hex)
    except ValueError:
        raise ParameterError(f"Invalid seed, expected hex: {seed_hex}")
    if not raw:
        raise ParameterError("Seed must not be empty")
    return raw if len(raw) == 32 else sha256(raw)


def parse_size(text: str) -> int:
    """
    Parse a human file size such as "1K", "10M" or "512".

    Args:
        text: Size with an optional K/M/G suffix (powers of 1024)

    Returns:
        Size in bytes
    """
    match = re.fullmatch(r"\s*(\d+)\s*([KMGB]?)B?\s*", text.upper())
    if not match:
        raise ParameterError(f"Invalid size: {text}")
    value = int(match.group(1)) * _SIZE_UNITS[match.group(2)]
    if value <= 0:
        raise ParameterError(f"Size must be positive: {text}")
    return value


def parse_size_list(text: str) -> List[int]:
    return [parse_size(part) for part in text.split(",") if part.strip()]


def parse_int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ParameterError(f"Invalid integer list: {text}")
    if not values or any(v < 1 for v in values):
        raise ParameterError(f"Expected positive integers: {text}")
    return values


def canonical_json(data: Any) -> bytes:
    """Deterministic JSON bytes (sorted keys, no whitespace)"""
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")


def calculate_cache_key(data: Dict[str, Any]) -> str:
    """
    Calculate a cache key for prepared files.

    Args:
        data: Dictionary of parameters

    Returns:
        SHA256 hash of the parameters
    """
    return hashlib.sha256(canonical_json(data)).hexdigest()
