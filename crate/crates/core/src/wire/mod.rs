//! Gotthard message format.
//!
//! Every datagram is a 10-byte header followed by `op_cnt` fixed-size
//! operations. Multi-byte integers are big-endian. See `docs/PROTOCOL.md`
//! for the byte layout.

mod fragment;

pub use fragment::{fragment, fragment_ops, Assembled, Reassembler, ReassemblyError, DEFAULT_FRAGMENT_TIMEOUT_US};

use std::fmt;

use thiserror::Error;

/// Bytes in an encoded header.
pub const HEADER_LEN: usize = 10;
/// Bytes in an operation value operand.
pub const VALUE_LEN: usize = 128;
/// Bytes in one encoded operation (type, key, value).
pub const OP_LEN: usize = 1 + 4 + VALUE_LEN;
/// Operations carried by a single fragment.
pub const MAX_OPS_PER_FRAG: usize = 10;
/// Largest encoded fragment.
pub const MAX_MESSAGE_LEN: usize = HEADER_LEN + MAX_OPS_PER_FRAG * OP_LEN;

pub type Key = u32;

/// A fixed 128-byte operand.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(pub [u8; VALUE_LEN]);

impl Value {
    pub const ZERO: Value = Value([0; VALUE_LEN]);

    /// A counter value: big-endian `u32` in the first four bytes, rest zero.
    pub fn from_counter(n: u32) -> Self {
        let mut v = [0u8; VALUE_LEN];
        v[..4].copy_from_slice(&n.to_be_bytes());
        Value(v)
    }

    pub fn counter(&self) -> u32 {
        u32::from_be_bytes([self.0[0], self.0[1], self.0[2], self.0[3]])
    }

    /// Copies `bytes` into a zero-padded value. Returns `None` if longer than 128 bytes.
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        if bytes.len() > VALUE_LEN {
            return None;
        }
        let mut v = [0u8; VALUE_LEN];
        v[..bytes.len()].copy_from_slice(bytes);
        Some(Value(v))
    }

    pub fn as_bytes(&self) -> &[u8; VALUE_LEN] {
        &self.0
    }
}

impl Default for Value {
    fn default() -> Self {
        Value::ZERO
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let used = self.0.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
        write!(f, "Value({}", hex::encode(&self.0[..used]))?;
        if used < VALUE_LEN {
            write!(f, "+{}z", VALUE_LEN - used)?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum OpType {
    Compare = 0,
    Read = 1,
    Write = 2,
}

impl TryFrom<u8> for OpType {
    type Error = u8;

    fn try_from(b: u8) -> Result<Self, u8> {
        match b {
            0 => Ok(OpType::Compare),
            1 => Ok(OpType::Read),
            2 => Ok(OpType::Write),
            other => Err(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Request = 0,
    Response = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    Abort = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Operation {
    pub op_type: OpType,
    pub key: Key,
    /// Unused for requests' READ operations; carries the result in responses.
    pub value: Value,
}

impl Operation {
    pub fn compare(key: Key, value: Value) -> Self {
        Operation { op_type: OpType::Compare, key, value }
    }

    pub fn read(key: Key) -> Self {
        Operation { op_type: OpType::Read, key, value: Value::ZERO }
    }

    pub fn read_result(key: Key, value: Value) -> Self {
        Operation { op_type: OpType::Read, key, value }
    }

    pub fn write(key: Key, value: Value) -> Self {
        Operation { op_type: OpType::Write, key, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GotthardHeader {
    pub msg_type: MsgType,
    pub from_switch: bool,
    pub txn_id: u32,
    pub frag_count: u8,
    /// 1-based.
    pub frag_seq: u8,
    pub status: Status,
    pub op_cnt: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub header: GotthardHeader,
    pub ops: Vec<Operation>,
}

impl Message {
    /// Single-fragment message with `op_cnt` filled in from `ops`.
    pub fn new(msg_type: MsgType, txn_id: u32, status: Status, ops: Vec<Operation>) -> Self {
        Message {
            header: GotthardHeader {
                msg_type,
                from_switch: false,
                txn_id,
                frag_count: 1,
                frag_seq: 1,
                status,
                op_cnt: ops.len().min(u8::MAX as usize) as u8,
            },
            ops,
        }
    }

    pub fn is_fragmented(&self) -> bool {
        self.header.frag_count > 1
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.ops.len() * OP_LEN
    }

    /// Splits the operation list back into a transaction set.
    pub fn to_set(&self) -> TransactionSet {
        TransactionSet::from_ops(self.ops.iter().copied())
    }
}

/// The three operation lists of one transaction, request or response.
///
/// Read entries carry a value only in responses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransactionSet {
    pub compares: Vec<(Key, Value)>,
    pub reads: Vec<(Key, Value)>,
    pub writes: Vec<(Key, Value)>,
}

impl TransactionSet {
    pub fn request(
        compares: Vec<(Key, Value)>,
        read_keys: impl IntoIterator<Item = Key>,
        writes: Vec<(Key, Value)>,
    ) -> Self {
        TransactionSet {
            compares,
            reads: read_keys.into_iter().map(|k| (k, Value::ZERO)).collect(),
            writes,
        }
    }

    pub fn from_ops(ops: impl IntoIterator<Item = Operation>) -> Self {
        let mut set = TransactionSet::default();
        for op in ops {
            let entry = (op.key, op.value);
            match op.op_type {
                OpType::Compare => set.compares.push(entry),
                OpType::Read => set.reads.push(entry),
                OpType::Write => set.writes.push(entry),
            }
        }
        set
    }

    pub fn len(&self) -> usize {
        self.compares.len() + self.reads.len() + self.writes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Operations in wire order: compares, then reads, then writes.
    pub fn ops(&self) -> impl Iterator<Item = Operation> + '_ {
        let c = self.compares.iter().map(|&(k, v)| Operation::compare(k, v));
        let r = self.reads.iter().map(|&(k, v)| Operation::read_result(k, v));
        let w = self.writes.iter().map(|&(k, v)| Operation::write(k, v));
        c.chain(r).chain(w)
    }

    /// True if no key appears twice within one list.
    pub fn has_unique_keys(&self) -> bool {
        fn unique(list: &[(Key, Value)]) -> bool {
            let mut keys: Vec<Key> = list.iter().map(|e| e.0).collect();
            keys.sort_unstable();
            keys.windows(2).all(|w| w[0] != w[1])
        }
        unique(&self.compares) && unique(&self.reads) && unique(&self.writes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("fragment carries {0} operations, at most {MAX_OPS_PER_FRAG} allowed")]
    TooManyOps(usize),
    #[error("op_cnt {declared} does not match {actual} operations")]
    OpCountMismatch { declared: u8, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated {what} at byte {offset}: need {needed} bytes, have {available}")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid {field} discriminant {value} at byte {offset}")]
    BadDiscriminant {
        field: &'static str,
        offset: usize,
        value: u8,
    },
    #[error("invalid header at byte {offset}: {reason}")]
    InvalidHeader { offset: usize, reason: &'static str },
    #[error("{extra} trailing bytes after operation {op_cnt} at byte {offset}")]
    TrailingBytes {
        offset: usize,
        op_cnt: u8,
        extra: usize,
    },
}

impl DecodeError {
    pub fn offset(&self) -> usize {
        match *self {
            DecodeError::Truncated { offset, .. }
            | DecodeError::BadDiscriminant { offset, .. }
            | DecodeError::InvalidHeader { offset, .. }
            | DecodeError::TrailingBytes { offset, .. } => offset,
        }
    }
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut buf = Vec::with_capacity(msg.encoded_len());
    encode_into(msg, &mut buf)?;
    Ok(buf)
}

pub fn encode_into(msg: &Message, buf: &mut Vec<u8>) -> Result<(), EncodeError> {
    if msg.ops.len() > MAX_OPS_PER_FRAG {
        return Err(EncodeError::TooManyOps(msg.ops.len()));
    }
    let h = &msg.header;
    if h.op_cnt as usize != msg.ops.len() {
        return Err(EncodeError::OpCountMismatch {
            declared: h.op_cnt,
            actual: msg.ops.len(),
        });
    }
    buf.push(h.msg_type as u8);
    buf.push(h.from_switch as u8);
    buf.extend_from_slice(&h.txn_id.to_be_bytes());
    buf.push(h.frag_count);
    buf.push(h.frag_seq);
    buf.push(h.status as u8);
    buf.push(h.op_cnt);
    for op in &msg.ops {
        buf.push(op.op_type as u8);
        buf.extend_from_slice(&op.key.to_be_bytes());
        buf.extend_from_slice(&op.value.0);
    }
    Ok(())
}

/// Decodes one datagram. Only canonical encodings are accepted, so
/// `encode(decode(b)?) == b` for every accepted `b`.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            what: "header",
            offset: 0,
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let msg_type = match bytes[0] {
        0 => MsgType::Request,
        1 => MsgType::Response,
        value => return Err(DecodeError::BadDiscriminant { field: "msg_type", offset: 0, value }),
    };
    let from_switch = match bytes[1] {
        0 => false,
        1 => true,
        value => {
            return Err(DecodeError::BadDiscriminant { field: "from_switch", offset: 1, value })
        }
    };
    let txn_id = u32::from_be_bytes([bytes[2], bytes[3], bytes[4], bytes[5]]);
    let frag_count = bytes[6];
    let frag_seq = bytes[7];
    if frag_count == 0 {
        return Err(DecodeError::InvalidHeader { offset: 6, reason: "frag_count is zero" });
    }
    if frag_seq == 0 || frag_seq > frag_count {
        return Err(DecodeError::InvalidHeader { offset: 7, reason: "frag_seq outside 1..=frag_count" });
    }
    let status = match bytes[8] {
        0 => Status::Ok,
        1 => Status::Abort,
        value => return Err(DecodeError::BadDiscriminant { field: "status", offset: 8, value }),
    };
    if msg_type == MsgType::Request && status != Status::Ok {
        return Err(DecodeError::InvalidHeader { offset: 8, reason: "request with non-OK status" });
    }
    let op_cnt = bytes[9];
    if op_cnt as usize > MAX_OPS_PER_FRAG {
        return Err(DecodeError::InvalidHeader { offset: 9, reason: "op_cnt exceeds per-fragment limit" });
    }

    let mut ops = Vec::with_capacity(op_cnt as usize);
    let mut offset = HEADER_LEN;
    for _ in 0..op_cnt {
        let rest = &bytes[offset..];
        if rest.len() < OP_LEN {
            return Err(DecodeError::Truncated {
                what: "operation",
                offset,
                needed: OP_LEN,
                available: rest.len(),
            });
        }
        let op_type = OpType::try_from(rest[0])
            .map_err(|value| DecodeError::BadDiscriminant { field: "op_type", offset, value })?;
        let key = u32::from_be_bytes([rest[1], rest[2], rest[3], rest[4]]);
        let mut value = [0u8; VALUE_LEN];
        value.copy_from_slice(&rest[5..OP_LEN]);
        ops.push(Operation { op_type, key, value: Value(value) });
        offset += OP_LEN;
    }
    if offset != bytes.len() {
        return Err(DecodeError::TrailingBytes {
            offset,
            op_cnt,
            extra: bytes.len() - offset,
        });
    }
    Ok(Message {
        header: GotthardHeader {
            msg_type,
            from_switch,
            txn_id,
            frag_count,
            frag_seq,
            status,
            op_cnt,
        },
        ops,
    })
}
