"""
Tests for the off-chain audit session
"""

from dataclasses import replace

import pytest

from porchain.channel import (
    AcceptOutcome,
    AuditorChannel,
    ChannelMsg,
    ClosePayload,
    ComplaintReason,
    MsgKind,
    ServerChannel,
    ServerComplaint,
    decode_query_payload,
    encode_query_payload,
    resolve_max_queries,
)
from porchain.errors import ChannelError, FormatError, ParameterError
from porchain.models import Scheme
from porchain.por import Accumulator, TaggedFile, VerifyCode, gen_query, verify_response
from porchain.utils import pack_fields

from conftest import sampler

CHANNEL_ID = b"\x22" * 32
SEED = b"\x33" * 32


def open_pair(file, public, identities, audit_count=2, cap=None, server_cap="same"):
    auditor = AuditorChannel(
        CHANNEL_ID,
        SEED,
        file.params,
        public,
        identities["auditor"],
        identities["server"].verify_key,
        audit_count,
        cap,
    )
    server = ServerChannel(
        CHANNEL_ID,
        SEED,
        file,
        public,
        identities["server"],
        identities["auditor"].verify_key,
        cap if server_cap == "same" else server_cap,
        rng=sampler("server-r"),
    )
    return auditor, server


def run_session(auditor, server):
    outcomes = []
    while True:
        answer = server.server_step(auditor.auditor_step())
        if isinstance(answer, ServerComplaint):
            return outcomes, answer
        outcomes.append(auditor.auditor_accept(answer))
        if outcomes[-1] != AcceptOutcome.CONTINUE:
            return outcomes, None


def without_block(file: TaggedFile, i: int) -> TaggedFile:
    blocks = [list(b) for b in file.blocks]
    blocks[i - 1] = [0] * file.params.s
    return TaggedFile(params=file.params, blocks=blocks, tags=list(file.tags), digests=file.digests)


class TestHonestSession:
    """Test complete sessions between honest endpoints"""

    def test_aub(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        outcomes, complaint = run_session(auditor, server)
        assert complaint is None
        assert outcomes == [AcceptOutcome.CONTINUE, AcceptOutcome.CLOSE_OK]
        assert server.server_step(auditor.ack()) is None
        assert auditor.acc.digest() == server.acc.digest()

        payload = auditor.build_close_payload()
        assert payload.k == 2 and not payload.complaint
        code = verify_response(Scheme.AUB, payload.entries(), payload.proof, aub_keys.public, aub_file.params)
        assert code == VerifyCode.OK

    def test_ppaub(self, ppaub_file, ppaub_keys, identities):
        auditor, server = open_pair(ppaub_file, ppaub_keys.public, identities, audit_count=4)
        outcomes, complaint = run_session(auditor, server)
        assert complaint is None
        assert outcomes[-1] == AcceptOutcome.CLOSE_OK
        assert auditor.queries_sent == 4
        assert all(r.R == auditor.responses[0].R for r in auditor.responses)
        payload = auditor.build_close_payload()
        assert payload.fileid == ppaub_file.params.fileid
        code = verify_response(Scheme.PPAUB, payload.entries(), payload.proof, ppaub_keys.public, ppaub_file.params)
        assert code == VerifyCode.OK

    def test_nonce_parity(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        first = auditor.auditor_step()
        reply = server.server_step(first)
        auditor.auditor_accept(reply)
        second = auditor.auditor_step()
        assert (first.nonce, reply.nonce, second.nonce) == (0, 1, 2)

    def test_queries_follow_the_seed(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        run_session(auditor, server)
        assert [q.entries for q in auditor.queries] == [
            gen_query(SEED, aub_file.params, k).entries for k in range(2)
        ]

    def test_rebuttal_verifies(self, ppaub_file, ppaub_keys, identities):
        auditor, server = open_pair(ppaub_file, ppaub_keys.public, identities, audit_count=2)
        run_session(auditor, server)
        query = auditor.queries[-1]
        proof = server.rebuttal(query)
        assert proof.verify_signature(identities["server"].verify_key, CHANNEL_ID, query.seq)
        code = verify_response(Scheme.PPAUB, query.entries, proof, ppaub_keys.public, ppaub_file.params)
        assert code == VerifyCode.OK


class TestServerComplaints:
    """Test what the server refuses to answer"""

    def test_replayed_query(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        msg = auditor.auditor_step()
        auditor.auditor_accept(server.server_step(msg))
        complaint = server.server_step(msg)
        assert isinstance(complaint, ServerComplaint)
        assert complaint.reason == ComplaintReason.NONCE

    def test_forged_signature(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        msg = auditor.auditor_step()
        complaint = server.server_step(replace(msg, payload=msg.payload + b"\x00"))
        assert complaint.reason == ComplaintReason.SIGNATURE

    def test_out_of_sequence_query(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        key = identities["auditor"]
        query = gen_query(SEED, aub_file.params, 1).signed(key, CHANNEL_ID)
        payload = encode_query_payload(query, Accumulator.empty(Scheme.AUB, 2).digest())
        msg = ChannelMsg.create(CHANNEL_ID, 0, MsgKind.QUERY, payload, key)
        complaint = server.server_step(msg)
        assert complaint.reason == ComplaintReason.QUERY_MISMATCH
        assert complaint.payload.complaint
        assert complaint.payload.queries == (query,)
        assert complaint.payload.disputed_seq == 0
        assert ChannelMsg.decode(complaint.payload.evidence) == msg
        assert complaint.notice.kind == MsgKind.COMPLAINT_NOTICE
        assert complaint.notice.verify(identities["server"].verify_key)
        with pytest.raises(ChannelError):
            server.server_step(msg)

    def test_wrong_ack(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        key = identities["auditor"]
        query = gen_query(SEED, aub_file.params, 0).signed(key, CHANNEL_ID)
        msg = ChannelMsg.create(CHANNEL_ID, 0, MsgKind.QUERY, encode_query_payload(query, b"\x00" * 32), key)
        assert server.server_step(msg).reason == ComplaintReason.STATE

    def test_privacy_cap(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=None, server_cap=1)
        outcomes, complaint = run_session(auditor, server)
        assert outcomes == [AcceptOutcome.CONTINUE]
        assert complaint.reason == ComplaintReason.PRIVACY_CAP
        assert complaint.payload.k == 2
        assert complaint.payload.proof is not None

    def test_unexpected_kind(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        msg = ChannelMsg.create(CHANNEL_ID, 0, MsgKind.RESPONSE, b"", identities["auditor"])
        assert server.server_step(msg).reason == ComplaintReason.PROTOCOL


class TestAuditorChecks:
    """Test how the auditor judges responses"""

    def test_lost_block(self, aub_file, aub_keys, identities):
        first = gen_query(SEED, aub_file.params, 0)
        damaged = without_block(aub_file, first.indices[0])
        auditor, server = open_pair(damaged, aub_keys.public, identities, audit_count=2, cap=2)
        outcomes, complaint = run_session(auditor, server)
        assert complaint is None
        assert outcomes == [AcceptOutcome.CLOSE_COMPLAINT]
        assert auditor.complaint == ComplaintReason.VERIFICATION
        assert auditor.failure_code == VerifyCode.EQUATION_FAILED
        payload = auditor.build_close_payload()
        assert payload.complaint and payload.disputed_seq == 0 and payload.proof is None
        assert auditor.complaint_notice().kind == MsgKind.COMPLAINT_NOTICE

    def test_ppaub_lost_block(self, ppaub_file, ppaub_keys, identities):
        """A failure after accepted responses disputes only the last query"""
        first = gen_query(SEED, ppaub_file.params, 0)
        lost = next(i for i in range(1, ppaub_file.n + 1) if i not in first.indices)
        k = next(k for k in range(1, 64) if lost in gen_query(SEED, ppaub_file.params, k).indices)
        damaged = without_block(ppaub_file, lost)
        auditor, server = open_pair(damaged, ppaub_keys.public, identities, audit_count=k + 1)
        outcomes, _ = run_session(auditor, server)
        assert outcomes == [AcceptOutcome.CONTINUE] * k + [AcceptOutcome.CLOSE_COMPLAINT]
        payload = auditor.build_close_payload()
        assert payload.disputed_seq == k
        assert payload.proof is not None

    def test_bad_response_nonce(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        reply = server.server_step(auditor.auditor_step())
        forged = ChannelMsg.create(CHANNEL_ID, 5, reply.kind, reply.payload, identities["server"])
        assert auditor.auditor_accept(forged) == AcceptOutcome.CLOSE_COMPLAINT
        assert auditor.complaint == ComplaintReason.NONCE

    def test_ordering(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        query_msg = auditor.auditor_step()
        with pytest.raises(ChannelError):
            auditor.auditor_step()
        reply = server.server_step(query_msg)
        auditor.auditor_accept(reply)
        with pytest.raises(ChannelError):
            auditor.auditor_accept(reply)
        with pytest.raises(ChannelError):
            auditor.build_close_payload()

    def test_count_over_cap(self, aub_file, aub_keys, identities):
        with pytest.raises(ParameterError):
            open_pair(aub_file, aub_keys.public, identities, audit_count=3, cap=2)


class TestClosePayload:
    """Test the close payload encoding"""

    def test_roundtrip(self, ppaub_file, ppaub_keys, identities):
        auditor, server = open_pair(ppaub_file, ppaub_keys.public, identities, audit_count=2)
        run_session(auditor, server)
        payload = auditor.build_close_payload()
        decoded = ClosePayload.decode(payload.encode())
        assert decoded.queries == payload.queries
        assert decoded.fileid == payload.fileid
        assert decoded.proof.R == payload.proof.R
        assert decoded.size == payload.size

    def test_size_is_linear_in_k(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=1)
        run_session(auditor, server)
        payload = auditor.build_close_payload()
        key = identities["auditor"]
        queries = tuple(gen_query(SEED, aub_file.params, seq).signed(key, CHANNEL_ID) for seq in range(10))
        sizes = {k: replace(payload, queries=queries[:k]).size for k in (1, 3, 5, 7, 10)}
        base = replace(payload, queries=()).size
        delta = sizes[1] - base
        assert delta > 0
        assert {k: base + k * delta for k in sizes} == sizes

    def test_unequal_records(self, aub_file, aub_keys, identities):
        auditor, server = open_pair(aub_file, aub_keys.public, identities, audit_count=2, cap=2)
        run_session(auditor, server)
        payload = auditor.build_close_payload()
        first = payload.queries[0]
        short = replace(first, entries=first.entries[:1]).signed(identities["auditor"], CHANNEL_ID)
        decoded = ClosePayload.decode(replace(payload, queries=(short,) + payload.queries[1:]).encode())
        assert decoded.queries[0] == short
        assert decoded.queries[1] == payload.queries[1]

    def test_bad_bytes(self):
        with pytest.raises(FormatError):
            ClosePayload.decode(b"\x00\x00\x00\x05abc")
        header = pack_fields(b"xyz", b"", b"\x00", b"", b"", b"", b"", b"", b"")
        with pytest.raises(FormatError):
            ClosePayload.decode(pack_fields(header, b"\x00" * 8, b""))
        good = pack_fields(b"aub", b"", b"\x00", b"", b"", b"", b"", b"", b"")
        with pytest.raises(FormatError):
            ClosePayload.decode(pack_fields(good, (2).to_bytes(8, "big"), pack_fields(b"x")))


class TestHelpers:
    """Test small channel helpers"""

    def test_resolve_max_queries(self):
        assert resolve_max_queries(Scheme.AUB, 11) == 10
        assert resolve_max_queries(Scheme.AUB, 11, 4) == 4
        assert resolve_max_queries(Scheme.PPAUB, 11, 4) is None

    def test_query_payload(self, aub_file, identities):
        query = gen_query(SEED, aub_file.params, 0).signed(identities["auditor"], CHANNEL_ID)
        decoded, ack = decode_query_payload(encode_query_payload(query, b"\x01" * 32))
        assert decoded == query and ack == b"\x01" * 32
        with pytest.raises(FormatError):
            decode_query_payload(encode_query_payload(query, b"\x01" * 31))

    def test_unknown_kind(self, identities):
        msg = ChannelMsg.create(CHANNEL_ID, 0, MsgKind.ACK, b"", identities["auditor"])
        raw = msg.encode().replace(b"ack", b"zzz")
        with pytest.raises(FormatError):
            ChannelMsg.decode(raw)
