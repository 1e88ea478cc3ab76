"""
Channel - Off-chain audit session between server and auditor

Wire format. Every field is preceded by its 4-byte big-endian length; integers
are 8-byte big-endian.

    ChannelMsg        = [channel_id(32)] [u64 nonce] [kind ascii] [payload] [sig(64)]
    signed bytes      = ["CHAN/MSG"] [channel_id] [u64 nonce] [kind ascii] [payload]
    query payload     = [Query.encode()] [ack digest(32)]
    response payload  = PorResponse.encode()
    ack payload       = ack digest(32)
    complaint_notice  = [reason ascii] [u64 seq]

Auditor messages use even nonces (0, 2, 4, ...), server messages odd ones
(1, 3, 5, ...). The ack digest inside each query commits to the auditor's
accumulator after the previous response, so the server can detect a misrecorded
state before answering.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple, Union

from .crypto import (
    DST_CHAN_MSG,
    SigKeypair,
    XofSampler,
    decode_scalar,
    draw_scalar,
    encode_scalar,
    sig_verify,
    sign,
)
from .errors import ChannelError, FormatError, ParameterError
from .models import PorParams, Scheme
from .por import (
    Accumulator,
    PorResponse,
    PublicKeys,
    Query,
    TaggedFile,
    VerifyCode,
    aggregate,
    collect_entries,
    gen_query,
    gen_response_aub,
    gen_response_ppaub,
    rebuttal_response_ppaub,
    verify_response,
)
from .utils import pack_fields, read_u64, u64, unpack_fields

logger = logging.getLogger(__name__)


class MsgKind(str, Enum):
    QUERY = "query"
    RESPONSE = "response"
    ACK = "ack"
    COMPLAINT_NOTICE = "complaint_notice"


class ComplaintReason(str, Enum):
    NONCE = "nonce"
    SIGNATURE = "signature"
    PRIVACY_CAP = "privacy_cap"
    STATE = "state"
    QUERY_MISMATCH = "query_mismatch"
    PROTOCOL = "protocol"
    VERIFICATION = "verification"


class AcceptOutcome(str, Enum):
    CONTINUE = "continue"
    CLOSE_OK = "close_ok"
    CLOSE_COMPLAINT = "close_complaint"


@dataclass(frozen=True)
class ChannelMsg:
    channel_id: bytes
    nonce: int
    kind: MsgKind
    payload: bytes
    sig: bytes = b""

    def signing_bytes(self) -> bytes:
        return pack_fields(
            DST_CHAN_MSG.encode("ascii"),
            self.channel_id,
            u64(self.nonce),
            self.kind.value.encode("ascii"),
            self.payload,
        )

    @classmethod
    def create(
        cls, channel_id: bytes, nonce: int, kind: MsgKind, payload: bytes, key: SigKeypair
    ) -> "ChannelMsg":
        unsigned = cls(channel_id=channel_id, nonce=nonce, kind=kind, payload=payload)
        return cls(
            channel_id=channel_id,
            nonce=nonce,
            kind=kind,
            payload=payload,
            sig=sign(unsigned.signing_bytes(), key),
        )

    def verify(self, verify_key: bytes) -> bool:
        return sig_verify(self.signing_bytes(), self.sig, verify_key)

    def encode(self) -> bytes:
        return pack_fields(
            self.channel_id, u64(self.nonce), self.kind.value.encode("ascii"), self.payload, self.sig
        )

    @classmethod
    def decode(cls, data: bytes) -> "ChannelMsg":
        channel_id, nonce, kind, payload, sig = unpack_fields(data, 5)
        try:
            msg_kind = MsgKind(kind.decode("ascii"))
        except (UnicodeDecodeError, ValueError):
            raise FormatError(f"Unknown message kind: {kind!r}")
        return cls(channel_id=channel_id, nonce=read_u64(nonce), kind=msg_kind, payload=payload, sig=sig)


def encode_query_payload(query: Query, ack_digest: bytes) -> bytes:
    return pack_fields(query.encode(), ack_digest)


def decode_query_payload(payload: bytes) -> Tuple[Query, bytes]:
    raw, ack = unpack_fields(payload, 2)
    if len(ack) != 32:
        raise FormatError("Ack digest must be 32 bytes")
    return Query.decode(raw), ack


def resolve_max_queries(scheme: Scheme, l: int, override: Optional[int] = None) -> Optional[int]:
    """Per-channel query cap: l - 1 (or the override) under AuB, none under PPAuB"""
    if scheme == Scheme.PPAUB:
        return None
    return override if override is not None else l - 1


@dataclass(frozen=True)
class ClosePayload:
    """
    Arguments of close_channel.

    Layout: a header of fixed fields, the query count and k length-prefixed
    query records. Honest records of one parameter set have equal size, so the
    encoded size is C + k * record_size; a malformed record still encodes and is
    left for the contract to judge.
    """

    scheme: Scheme
    channel_id: bytes
    complaint: bool
    seed: bytes
    queries: Tuple[Query, ...]
    proof: Optional[PorResponse] = None
    reason: Optional[ComplaintReason] = None
    fileid: Optional[int] = None
    disputed_seq: Optional[int] = None
    evidence: bytes = b""

    @property
    def k(self) -> int:
        return len(self.queries)

    def entries(self) -> List[Tuple[int, int]]:
        return collect_entries(self.queries)

    def encode(self) -> bytes:
        header = pack_fields(
            self.scheme.value.encode("ascii"),
            self.channel_id,
            b"\x01" if self.complaint else b"\x00",
            self.reason.value.encode("ascii") if self.reason else b"",
            self.seed,
            encode_scalar(self.fileid) if self.fileid is not None else b"",
            u64(self.disputed_seq) if self.disputed_seq is not None else b"",
            self.proof.proof_bytes() if self.proof is not None else b"",
            self.evidence,
        )
        records = pack_fields(*(q.record_bytes() for q in self.queries))
        return pack_fields(header, u64(self.k), records)

    @classmethod
    def decode(cls, data: bytes) -> "ClosePayload":
        header, count_raw, records_raw = unpack_fields(data, 3)
        scheme, channel_id, flag, reason, seed, fileid, disputed, proof, evidence = unpack_fields(
            header, 9
        )
        records = unpack_fields(records_raw, read_u64(count_raw))
        try:
            parsed_scheme = Scheme(scheme.decode("ascii"))
            parsed_reason = ComplaintReason(reason.decode("ascii")) if reason else None
        except (UnicodeDecodeError, ValueError):
            raise FormatError("Unknown scheme or complaint reason")
        if flag not in (b"\x00", b"\x01"):
            raise FormatError("Complaint flag must be one byte, 0 or 1")
        queries = tuple(Query.from_record(record, seed) for record in records)
        return cls(
            scheme=parsed_scheme,
            channel_id=channel_id,
            complaint=flag == b"\x01",
            seed=seed,
            queries=queries,
            proof=PorResponse.from_proof_bytes(proof) if proof else None,
            reason=parsed_reason,
            fileid=decode_scalar(fileid) if fileid else None,
            disputed_seq=read_u64(disputed) if disputed else None,
            evidence=evidence,
        )

    @property
    def size(self) -> int:
        return len(self.encode())


class AuditorChannel:
    """
    Auditor endpoint of one audit session.

    Subclasses change behaviour through the hook methods (_make_query, _fold,
    _judge, _session_complete, _close_queries, _ack_digest).
    """

    def __init__(
        self,
        channel_id: bytes,
        seed: bytes,
        params: PorParams,
        public: PublicKeys,
        keys: SigKeypair,
        server_verify_key: bytes,
        audit_count: int,
        max_queries: Optional[int] = None,
    ):
        if audit_count < 1:
            raise ParameterError(f"audit_count must be at least 1: {audit_count}")
        if max_queries is not None and audit_count > max_queries:
            raise ParameterError(f"audit_count {audit_count} exceeds the query cap {max_queries}")
        self.channel_id = channel_id
        self.seed = seed
        self.params = params
        self.public = public
        self.keys = keys
        self.server_verify_key = server_verify_key
        self.audit_count = audit_count
        self.max_queries = max_queries

        self.queries: List[Query] = []
        self.responses: List[PorResponse] = []
        self.acc = Accumulator.empty(params.scheme, params.s)
        self.nonce = 0
        self.expected_nonce = 1
        self.pending: Optional[Query] = None
        self.outcome: Optional[AcceptOutcome] = None
        self.complaint: Optional[ComplaintReason] = None
        self.failure_code: Optional[VerifyCode] = None
        self._candidate: Optional[Accumulator] = None

    @property
    def scheme(self) -> Scheme:
        return self.params.scheme

    @property
    def queries_sent(self) -> int:
        return len(self.queries)

    @property
    def closed(self) -> bool:
        return self.outcome in (AcceptOutcome.CLOSE_OK, AcceptOutcome.CLOSE_COMPLAINT)

    def auditor_step(self) -> ChannelMsg:
        """Sign and send the next query; seq is the number of queries already sent"""
        if self.closed:
            raise ChannelError("Channel is closed")
        if self.pending is not None:
            raise ChannelError("Previous response not yet accepted")
        query = self._make_query(len(self.queries)).signed(self.keys, self.channel_id)
        payload = encode_query_payload(query, self._ack_digest())
        msg = ChannelMsg.create(self.channel_id, self.nonce, MsgKind.QUERY, payload, self.keys)
        self.nonce += 2
        self.pending = query
        self.queries.append(query)
        logger.debug(f"Auditor sent query seq={query.seq} nonce={msg.nonce}")
        return msg

    def auditor_accept(self, msg: ChannelMsg) -> AcceptOutcome:
        """
        Check, verify and fold one response.

        Returns:
            CONTINUE, CLOSE_OK once audit_count responses verified, or
            CLOSE_COMPLAINT naming the last query
        """
        if self.closed:
            raise ChannelError("Channel is closed")
        if self.pending is None:
            raise ChannelError("No query awaiting a response")
        query = self.pending
        if msg.channel_id != self.channel_id or not msg.verify(self.server_verify_key):
            return self._fail(ComplaintReason.SIGNATURE)
        if msg.nonce != self.expected_nonce:
            return self._fail(ComplaintReason.NONCE)
        if msg.kind != MsgKind.RESPONSE:
            return self._fail(ComplaintReason.PROTOCOL)
        try:
            resp = PorResponse.decode(msg.payload)
        except FormatError:
            return self._fail(ComplaintReason.VERIFICATION, VerifyCode.MALFORMED)
        if not resp.verify_signature(self.server_verify_key, self.channel_id, query.seq):
            return self._fail(ComplaintReason.SIGNATURE)

        self.expected_nonce += 2
        self.pending = None
        self.responses.append(resp)
        code = self._fold(query, resp)
        if not self._judge(code):
            return self._fail(ComplaintReason.VERIFICATION, code)
        if self._candidate is not None:
            self.acc = self._candidate
        self._candidate = None
        if self._session_complete():
            self.outcome = AcceptOutcome.CLOSE_OK
            logger.info(f"Audit session complete after {self.queries_sent} queries")
            return AcceptOutcome.CLOSE_OK
        self.outcome = AcceptOutcome.CONTINUE
        return AcceptOutcome.CONTINUE

    def ack(self) -> ChannelMsg:
        """Final acknowledgement of the accumulator after the last response"""
        msg = ChannelMsg.create(
            self.channel_id, self.nonce, MsgKind.ACK, self._ack_digest(), self.keys
        )
        self.nonce += 2
        return msg

    def complaint_notice(self) -> ChannelMsg:
        if self.complaint is None:
            raise ChannelError("No complaint to announce")
        payload = pack_fields(self.complaint.value.encode("ascii"), u64(self.queries[-1].seq))
        return ChannelMsg.create(
            self.channel_id, self.nonce, MsgKind.COMPLAINT_NOTICE, payload, self.keys
        )

    def build_close_payload(self) -> ClosePayload:
        """
        Assemble close_channel arguments.

        A complaint always pins the last query; the proof is then the aggregate of
        the responses accepted before it.
        """
        if not self.closed:
            raise ChannelError("No terminal decision yet")
        complaint = self.outcome == AcceptOutcome.CLOSE_COMPLAINT
        queries = tuple(self._close_queries())
        return ClosePayload(
            scheme=self.scheme,
            channel_id=self.channel_id,
            complaint=complaint,
            seed=self.seed,
            queries=queries,
            proof=self.acc.as_response() if self.acc.entries or not complaint else None,
            reason=self.complaint,
            fileid=self.params.fileid,
            disputed_seq=queries[-1].seq if complaint and queries else None,
        )

    # Hooks

    def _make_query(self, seq: int) -> Query:
        return gen_query(self.seed, self.params, seq)

    def _ack_digest(self) -> bytes:
        return self.acc.digest()

    def _fold(self, query: Query, resp: PorResponse) -> VerifyCode:
        """
        AuB checks the response alone before folding; PPAuB folds first and checks
        the aggregate, since only the first response carries r.
        """
        try:
            candidate = aggregate(self.acc, query, resp)
        except ParameterError:
            return VerifyCode.MALFORMED
        self._candidate = candidate
        if self.scheme == Scheme.AUB:
            return verify_response(self.scheme, query.entries, resp, self.public, self.params)
        return verify_response(
            self.scheme, candidate.entries, candidate.as_response(), self.public, self.params
        )

    def _judge(self, code: VerifyCode) -> bool:
        return bool(code)

    def _session_complete(self) -> bool:
        return len(self.queries) >= self.audit_count

    def _close_queries(self) -> List[Query]:
        return list(self.queries)

    def _fail(self, reason: ComplaintReason, code: Optional[VerifyCode] = None) -> AcceptOutcome:
        self.complaint = reason
        self.failure_code = code
        self.outcome = AcceptOutcome.CLOSE_COMPLAINT
        self._candidate = None
        logger.warning(f"Auditor complains about query seq={self.queries[-1].seq}: {reason.value}")
        return AcceptOutcome.CLOSE_COMPLAINT


@dataclass(frozen=True)
class ServerComplaint:
    """What server_step returns instead of a response"""

    reason: ComplaintReason
    offending: ChannelMsg
    payload: ClosePayload
    notice: ChannelMsg


class ServerChannel:
    """
    Server endpoint of one audit session.

    Every misbehaviour seen in an incoming message turns into a ServerComplaint
    carrying a ready close payload; nothing raises except driving a closed channel.
    """

    def __init__(
        self,
        channel_id: bytes,
        seed: bytes,
        file: TaggedFile,
        public: PublicKeys,
        keys: SigKeypair,
        auditor_verify_key: bytes,
        max_queries: Optional[int] = None,
        rng: Optional[XofSampler] = None,
    ):
        self.channel_id = channel_id
        self.seed = seed
        self.file = file
        self.public = public
        self.keys = keys
        self.auditor_verify_key = auditor_verify_key
        self.max_queries = max_queries
        self.rng = rng

        self.accepted: List[Query] = []
        self.acc = Accumulator.empty(file.params.scheme, file.params.s)
        self.r: Optional[int] = None
        self.expected_nonce = 0
        self.nonce = 1
        self.closed = False

    @property
    def params(self) -> PorParams:
        return self.file.params

    def server_step(self, msg: ChannelMsg) -> Union[ChannelMsg, ServerComplaint, None]:
        """
        Validate an incoming auditor message and answer it.

        Checks run in order: channel and signature, nonce, kind, payload, query
        signature, then the _screen hook (sequence, regeneration, ack, AuB cap).

        Returns:
            A signed response, a ServerComplaint, or None for a matching final ack
        """
        if self.closed:
            raise ChannelError("Channel is closed")
        if msg.channel_id != self.channel_id or not msg.verify(self.auditor_verify_key):
            return self._complain(ComplaintReason.SIGNATURE, msg)
        if msg.nonce != self.expected_nonce:
            return self._complain(ComplaintReason.NONCE, msg)
        if msg.kind == MsgKind.ACK:
            if msg.payload != self.acc.digest():
                return self._complain(ComplaintReason.STATE, msg)
            self.expected_nonce += 2
            return None
        if msg.kind != MsgKind.QUERY:
            return self._complain(ComplaintReason.PROTOCOL, msg)
        try:
            query, ack = decode_query_payload(msg.payload)
        except FormatError:
            return self._complain(ComplaintReason.PROTOCOL, msg)
        if not query.verify_signature(self.auditor_verify_key, self.channel_id):
            return self._complain(ComplaintReason.SIGNATURE, msg, query)
        reason = self._screen(query, ack)
        if reason is not None:
            return self._complain(reason, msg, query)

        resp = self._respond(query).signed(self.keys, self.channel_id, query.seq)
        self.acc = aggregate(self.acc, query, resp)
        self.accepted.append(query)
        self.expected_nonce += 2
        out = ChannelMsg.create(self.channel_id, self.nonce, MsgKind.RESPONSE, resp.encode(), self.keys)
        self.nonce += 2
        logger.debug(f"Server answered query seq={query.seq} nonce={out.nonce}")
        return out

    def rebuttal(self, query: Query) -> PorResponse:
        """Standalone proof for a disputed query"""
        if self.params.scheme == Scheme.AUB:
            resp = gen_response_aub(query, self.file)
        else:
            if self.r is None:
                self.r = draw_scalar(self.rng)
            resp = rebuttal_response_ppaub(query, self.file, self.public, self.r)
        return resp.signed(self.keys, self.channel_id, query.seq)

    # Hooks

    def _screen(self, query: Query, ack: bytes) -> Optional[ComplaintReason]:
        position = len(self.accepted)
        if query.seq != position or query.seed != self.seed:
            return ComplaintReason.QUERY_MISMATCH
        if query.entries != gen_query(self.seed, self.params, position).entries:
            return ComplaintReason.QUERY_MISMATCH
        if ack != self.acc.digest():
            return ComplaintReason.STATE
        if self.max_queries is not None and position + 1 > self.max_queries:
            return ComplaintReason.PRIVACY_CAP
        return None

    def _respond(self, query: Query) -> PorResponse:
        if self.params.scheme == Scheme.AUB:
            return gen_response_aub(query, self.file)
        first = self.r is None
        resp, self.r = gen_response_ppaub(
            query, self.file, self.public, first, None if first else self.r, rng=self.rng
        )
        return resp

    def _complain(
        self, reason: ComplaintReason, msg: ChannelMsg, query: Optional[Query] = None
    ) -> ServerComplaint:
        self.closed = True
        queries = tuple(self.accepted) + ((query,) if query is not None else ())
        payload = ClosePayload(
            scheme=self.params.scheme,
            channel_id=self.channel_id,
            complaint=True,
            seed=self.seed,
            queries=queries,
            proof=self.acc.as_response() if self.accepted else None,
            reason=reason,
            fileid=self.params.fileid,
            disputed_seq=len(self.accepted),
            evidence=msg.encode(),
        )
        notice = ChannelMsg.create(
            self.channel_id,
            self.nonce,
            MsgKind.COMPLAINT_NOTICE,
            pack_fields(reason.value.encode("ascii"), u64(len(self.accepted))),
            self.keys,
        )
        logger.warning(f"Server complains after {len(self.accepted)} queries: {reason.value}")
        return ServerComplaint(reason=reason, offending=msg, payload=payload, notice=notice)
