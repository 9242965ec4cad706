use super::{LoadError, TpccLiteConfig};
use crate::wire::Key;

const TABLE_SHIFT: u32 = 28;
const INDEX_LIMIT: u64 = 1 << TABLE_SHIFT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Table {
    Warehouse = 0,
    District = 1,
    Customer = 2,
    Item = 3,
    Stock = 4,
    Order = 5,
    OrderLine = 6,
    LastOrder = 7,
    DeliveryCursor = 8,
}

impl Table {
    pub const ALL: [Table; 9] = [
        Table::Warehouse,
        Table::District,
        Table::Customer,
        Table::Item,
        Table::Stock,
        Table::Order,
        Table::OrderLine,
        Table::LastOrder,
        Table::DeliveryCursor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::Warehouse => "warehouse",
            Table::District => "district",
            Table::Customer => "customer",
            Table::Item => "item",
            Table::Stock => "stock",
            Table::Order => "order",
            Table::OrderLine => "order_line",
            Table::LastOrder => "last_order",
            Table::DeliveryCursor => "delivery_cursor",
        }
    }
}

/// Primary key of a record. Warehouse, district, customer, item and line
/// numbers are 1-based; order slots are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordId {
    Warehouse { w: u32 },
    District { w: u32, d: u32 },
    Customer { w: u32, d: u32, c: u32 },
    Item { i: u32 },
    Stock { w: u32, i: u32 },
    Order { w: u32, d: u32, slot: u32 },
    OrderLine { w: u32, d: u32, slot: u32, number: u32 },
    LastOrder { w: u32, d: u32, c: u32 },
    DeliveryCursor { w: u32, d: u32 },
}

impl RecordId {
    pub fn table(&self) -> Table {
        match self {
            RecordId::Warehouse { .. } => Table::Warehouse,
            RecordId::District { .. } => Table::District,
            RecordId::Customer { .. } => Table::Customer,
            RecordId::Item { .. } => Table::Item,
            RecordId::Stock { .. } => Table::Stock,
            RecordId::Order { .. } => Table::Order,
            RecordId::OrderLine { .. } => Table::OrderLine,
            RecordId::LastOrder { .. } => Table::LastOrder,
            RecordId::DeliveryCursor { .. } => Table::DeliveryCursor,
        }
    }
}

/// Collision-free mapping from records to wire keys: the table in the top
/// four bits, the primary key as a mixed-radix number below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordKeyMap {
    warehouses: u32,
    districts: u32,
    customers: u32,
    items: u32,
    slots: u32,
    lines: u32,
}

impl RecordKeyMap {
    pub fn new(cfg: &TpccLiteConfig) -> Result<Self, LoadError> {
        let m = RecordKeyMap {
            warehouses: cfg.warehouses,
            districts: cfg.districts,
            customers: cfg.customers,
            items: cfg.items,
            slots: cfg.order_slots,
            lines: cfg.max_order_lines,
        };
        for t in Table::ALL {
            let needed = m.radices(t).iter().map(|&r| r as u64).product::<u64>();
            if needed > INDEX_LIMIT {
                return Err(LoadError::KeySpace { table: t.name(), needed, limit: INDEX_LIMIT });
            }
        }
        Ok(m)
    }

    fn radices(&self, t: Table) -> Vec<u32> {
        let (w, d, c, i, s, l) = (self.warehouses, self.districts, self.customers, self.items, self.slots, self.lines);
        match t {
            Table::Warehouse => vec![w],
            Table::District | Table::DeliveryCursor => vec![w, d],
            Table::Customer | Table::LastOrder => vec![w, d, c],
            Table::Item => vec![i],
            Table::Stock => vec![w, i],
            Table::Order => vec![w, d, s],
            Table::OrderLine => vec![w, d, s, l],
        }
    }

    /// Digits of `id`, each in `0..radix`.
    fn digits(id: RecordId) -> Vec<u32> {
        match id {
            RecordId::Warehouse { w } => vec![w - 1],
            RecordId::District { w, d } | RecordId::DeliveryCursor { w, d } => vec![w - 1, d - 1],
            RecordId::Customer { w, d, c } | RecordId::LastOrder { w, d, c } => vec![w - 1, d - 1, c - 1],
            RecordId::Item { i } => vec![i - 1],
            RecordId::Stock { w, i } => vec![w - 1, i - 1],
            RecordId::Order { w, d, slot } => vec![w - 1, d - 1, slot],
            RecordId::OrderLine { w, d, slot, number } => vec![w - 1, d - 1, slot, number - 1],
        }
    }

    /// Panics if `id` lies outside the configured cardinalities.
    pub fn key(&self, id: RecordId) -> Key {
        let t = id.table();
        let radices = self.radices(t);
        let mut index: u32 = 0;
        for (digit, radix) in Self::digits(id).into_iter().zip(radices) {
            assert!(digit < radix, "{id:?} out of range");
            index = index * radix + digit;
        }
        ((t as u32) << TABLE_SHIFT) | index
    }

    pub fn decode(&self, key: Key) -> Option<RecordId> {
        let t = *Table::ALL.get((key >> TABLE_SHIFT) as usize)?;
        let radices = self.radices(t);
        let mut rest = key & ((1 << TABLE_SHIFT) - 1);
        let mut digits = vec![0; radices.len()];
        for (slot, &radix) in digits.iter_mut().zip(&radices).rev() {
            *slot = rest % radix;
            rest /= radix;
        }
        if rest != 0 {
            return None;
        }
        let g = |i: usize| digits[i] + 1;
        Some(match t {
            Table::Warehouse => RecordId::Warehouse { w: g(0) },
            Table::District => RecordId::District { w: g(0), d: g(1) },
            Table::DeliveryCursor => RecordId::DeliveryCursor { w: g(0), d: g(1) },
            Table::Customer => RecordId::Customer { w: g(0), d: g(1), c: g(2) },
            Table::LastOrder => RecordId::LastOrder { w: g(0), d: g(1), c: g(2) },
            Table::Item => RecordId::Item { i: g(0) },
            Table::Stock => RecordId::Stock { w: g(0), i: g(1) },
            Table::Order => RecordId::Order { w: g(0), d: g(1), slot: digits[2] },
            Table::OrderLine => RecordId::OrderLine { w: g(0), d: g(1), slot: digits[2], number: g(3) },
        })
    }

    /// Every addressable record, table by table.
    pub fn all(&self) -> Vec<RecordId> {
        let mut out = Vec::new();
        let (ws, ds, cs, is, ss, ls) = (self.warehouses, self.districts, self.customers, self.items, self.slots, self.lines);
        for i in 1..=is {
            out.push(RecordId::Item { i });
        }
        for w in 1..=ws {
            out.push(RecordId::Warehouse { w });
            for i in 1..=is {
                out.push(RecordId::Stock { w, i });
            }
            for d in 1..=ds {
                out.push(RecordId::District { w, d });
                out.push(RecordId::DeliveryCursor { w, d });
                for c in 1..=cs {
                    out.push(RecordId::Customer { w, d, c });
                    out.push(RecordId::LastOrder { w, d, c });
                }
                for slot in 0..ss {
                    out.push(RecordId::Order { w, d, slot });
                    for number in 1..=ls {
                        out.push(RecordId::OrderLine { w, d, slot, number });
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn bijection_over_the_whole_key_space() {
        let cfg = TpccLiteConfig { warehouses: 2, districts: 3, ..TpccLiteConfig::default() };
        let m = RecordKeyMap::new(&cfg).unwrap();
        let all = m.all();
        let keys: HashSet<Key> = all.iter().map(|&id| m.key(id)).collect();
        assert_eq!(keys.len(), all.len());
        for id in all {
            assert_eq!(m.decode(m.key(id)), Some(id));
        }
    }

    #[test]
    fn decode_rejects_foreign_keys() {
        let m = RecordKeyMap::new(&TpccLiteConfig::default()).unwrap();
        assert_eq!(m.decode(0xF000_0000), None);
        assert_eq!(m.decode(1), None);
    }

    #[test]
    fn oversized_tables_are_refused() {
        let cfg = TpccLiteConfig { items: 1 << 20, warehouses: 1 << 9, ..TpccLiteConfig::default() };
        assert!(matches!(RecordKeyMap::new(&cfg), Err(LoadError::KeySpace { table: "stock", .. })));
    }
}
