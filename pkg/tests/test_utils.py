"""
Tests for encoding helpers, seeds and argument parsing
"""

import pytest

from porchain.errors import FormatError, ParameterError
from porchain.utils import (
    calculate_cache_key,
    canonical_json,
    derive_seed,
    pack_fields,
    parse_int_list,
    parse_seed,
    parse_size,
    parse_size_list,
    read_u64,
    u64,
    unpack_fields,
)


class TestUtils:
    """Test utility functions"""

    def test_pack_fields(self):
        packed = pack_fields(b"ab", b"", b"c")
        assert packed == b"\x00\x00\x00\x02ab\x00\x00\x00\x00\x00\x00\x00\x01c"
        assert unpack_fields(packed, 3) == [b"ab", b"", b"c"]

    def test_pack_fields_unambiguous(self):
        assert pack_fields(b"ab", b"c") != pack_fields(b"a", b"bc")

    def test_unpack_errors(self):
        with pytest.raises(FormatError):
            unpack_fields(b"\x00\x00\x00\x05abc")
        with pytest.raises(FormatError):
            unpack_fields(b"\x00\x00")
        with pytest.raises(FormatError):
            unpack_fields(pack_fields(b"a"), 2)

    def test_u64(self):
        assert read_u64(u64(2**64 - 1)) == 2**64 - 1
        with pytest.raises(ParameterError):
            u64(-1)
        with pytest.raises(ParameterError):
            u64(2**64)
        with pytest.raises(FormatError):
            read_u64(b"\x00" * 7)

    def test_parse_seed(self):
        raw = bytes(range(32))
        assert parse_seed(raw.hex()) == raw
        assert len(parse_seed("a5")) == 32
        assert parse_seed("a5") == parse_seed("A5")
        assert parse_seed(None) != parse_seed(None)
        with pytest.raises(ParameterError):
            parse_seed("xyz")
        with pytest.raises(ParameterError):
            parse_seed("")

    def test_derive_seed(self):
        master = b"\x01" * 32
        assert derive_seed(master, "a") == derive_seed(master, "a")
        assert derive_seed(master, "a") != derive_seed(master, "b")
        assert len(derive_seed(master, "a")) == 32

    def test_parse_size(self):
        assert parse_size("512") == 512
        assert parse_size("1K") == 1024
        assert parse_size("10mb") == 10 * 1024**2
        assert parse_size_list("1K, 2K") == [1024, 2048]
        for bad in ("", "0", "1T", "-1K"):
            with pytest.raises(ParameterError):
                parse_size(bad)

    def test_parse_int_list(self):
        assert parse_int_list("1,2,10") == [1, 2, 10]
        with pytest.raises(ParameterError):
            parse_int_list("1,a")
        with pytest.raises(ParameterError):
            parse_int_list("0")
        with pytest.raises(ParameterError):
            parse_int_list("")

    def test_canonical_json(self):
        assert canonical_json({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}'
        assert calculate_cache_key({"a": 1, "b": 2}) == calculate_cache_key({"b": 2, "a": 1})
        assert len(calculate_cache_key({})) == 64
