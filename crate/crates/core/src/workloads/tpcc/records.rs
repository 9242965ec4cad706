//! Fixed-width record layouts. Every record encodes into one 128-byte value;
//! integers are big-endian, strings are zero-padded and truncated to their
//! field width, unused trailing bytes are zero. Comparing two encodings for
//! byte equality therefore compares the records field by field.
//!
//! | table          | layout (bytes)                                                                 |
//! |----------------|--------------------------------------------------------------------------------|
//! | warehouse      | w u32, tax_bp u32, ytd u64, name 10, street 20, city 20, state 2, zip 9 (77)    |
//! | district       | w u32, d u32, tax_bp u32, ytd u64, next_o_id u32, name 10, street 20, city 20, state 2, zip 9 (85) |
//! | customer       | w u32, d u32, c u32, balance i64, ytd_payment u64, payment_cnt u32, delivery_cnt u32, discount_bp u32, credit_lim u64, credit 2, first 16, middle 2, last 16, phone 16 (100) |
//! | item           | i u32, im_id u32, price u32, name 24, data 50 (86)                              |
//! | stock          | w u32, i u32, quantity u32, ytd u32, order_cnt u32, remote_cnt u32, dist_info 24, data 50 (98) |
//! | order          | w u32, d u32, o_id u32, c u32, entry_d u64, carrier u32, ol_cnt u32, all_local u32 (36) |
//! | order_line     | w u32, d u32, o_id u32, number u32, i u32, supply_w u32, delivery_d u64, quantity u32, amount u32, dist_info 24 (64) |
//! | last_order     | w u32, d u32, c u32, o_id u32 (16)                                              |
//! | delivery_cursor| w u32, d u32, next_o_id u32 (12)                                                |
//!
//! Money is in cents, rates in basis points. An all-zero value decodes to a
//! record with every field zero, which the transactions treat as absent.

use crate::wire::{Value, VALUE_LEN};

struct Writer {
    buf: [u8; VALUE_LEN],
    pos: usize,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: [0; VALUE_LEN], pos: 0 }
    }

    fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf[self.pos..self.pos + b.len()].copy_from_slice(b);
        self.pos += b.len();
        self
    }

    fn u32(&mut self, v: u32) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    fn i64(&mut self, v: i64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    fn text(&mut self, s: &[u8], width: usize) -> &mut Self {
        let n = s.len().min(width);
        self.buf[self.pos..self.pos + n].copy_from_slice(&s[..n]);
        self.pos += width;
        self
    }

    fn finish(&self) -> Value {
        Value(self.buf)
    }
}

struct Reader<'a> {
    buf: &'a [u8; VALUE_LEN],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(v: &'a Value) -> Self {
        Reader { buf: &v.0, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        out
    }

    fn u32(&mut self) -> u32 {
        u32::from_be_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_be_bytes(self.take())
    }

    fn i64(&mut self) -> i64 {
        i64::from_be_bytes(self.take())
    }

    fn text<const N: usize>(&mut self) -> [u8; N] {
        self.take()
    }
}

/// Encoded size in bytes of each layout.
pub const LAYOUT_LEN: [(&str, usize); 9] = [
    ("warehouse", 77),
    ("district", 85),
    ("customer", 100),
    ("item", 86),
    ("stock", 98),
    ("order", 36),
    ("order_line", 64),
    ("last_order", 16),
    ("delivery_cursor", 12),
];

macro_rules! record {
    (
        $name:ident, $len:literal {
            $( $field:ident : $kind:tt $( [$width:literal] )? ),* $(,)?
        }
    ) => {
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct $name {
            $( pub $field: record!(@ty $kind $( [$width] )?), )*
        }

        impl Default for $name {
            fn default() -> Self {
                Self::from_value(&Value::ZERO)
            }
        }

        impl $name {
            pub const ENCODED_LEN: usize = $len;

            pub fn to_value(&self) -> Value {
                let mut w = Writer::new();
                $( record!(@put w, self.$field, $kind $( [$width] )?); )*
                debug_assert_eq!(w.pos, Self::ENCODED_LEN);
                w.finish()
            }

            pub fn from_value(v: &Value) -> Self {
                let mut r = Reader::new(v);
                $name { $( $field: record!(@get r, $kind $( [$width] )?), )* }
            }
        }
    };
    (@ty u32) => { u32 };
    (@ty u64) => { u64 };
    (@ty i64) => { i64 };
    (@ty text [$w:literal]) => { [u8; $w] };
    (@put $w:ident, $v:expr, u32) => { $w.u32($v) };
    (@put $w:ident, $v:expr, u64) => { $w.u64($v) };
    (@put $w:ident, $v:expr, i64) => { $w.i64($v) };
    (@put $w:ident, $v:expr, text [$width:literal]) => { $w.text(&$v, $width) };
    (@get $r:ident, u32) => { $r.u32() };
    (@get $r:ident, u64) => { $r.u64() };
    (@get $r:ident, i64) => { $r.i64() };
    (@get $r:ident, text [$width:literal]) => { $r.text::<$width>() };
}

record!(Warehouse, 77 {
    w: u32, tax_bp: u32, ytd: u64,
    name: text[10], street: text[20], city: text[20], state: text[2], zip: text[9],
});

record!(District, 85 {
    w: u32, d: u32, tax_bp: u32, ytd: u64, next_o_id: u32,
    name: text[10], street: text[20], city: text[20], state: text[2], zip: text[9],
});

record!(Customer, 100 {
    w: u32, d: u32, c: u32, balance: i64, ytd_payment: u64, payment_cnt: u32, delivery_cnt: u32,
    discount_bp: u32, credit_lim: u64,
    credit: text[2], first: text[16], middle: text[2], last: text[16], phone: text[16],
});

record!(Item, 86 {
    i: u32, im_id: u32, price: u32, name: text[24], data: text[50],
});

record!(Stock, 98 {
    w: u32, i: u32, quantity: u32, ytd: u32, order_cnt: u32, remote_cnt: u32,
    dist_info: text[24], data: text[50],
});

record!(Order, 36 {
    w: u32, d: u32, o_id: u32, c: u32, entry_d: u64, carrier: u32, ol_cnt: u32, all_local: u32,
});

record!(OrderLine, 64 {
    w: u32, d: u32, o_id: u32, number: u32, i: u32, supply_w: u32, delivery_d: u64,
    quantity: u32, amount: u32, dist_info: text[24],
});

record!(LastOrder, 16 {
    w: u32, d: u32, c: u32, o_id: u32,
});

record!(DeliveryCursor, 12 {
    w: u32, d: u32, next_o_id: u32,
});

/// Copies `s` into a fixed-width field, truncating.
pub fn text<const N: usize>(s: &str) -> [u8; N] {
    let mut out = [0; N];
    let n = s.len().min(N);
    out[..n].copy_from_slice(&s.as_bytes()[..n]);
    out
}
