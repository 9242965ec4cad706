//! Scaled-down TPC-C over the key-value store.
//!
//! Each record is one key-value pair; keys come from [`RecordKeyMap`], values
//! from the fixed layouts in [`records`]. Transactions only use exact-key
//! lookups. Two helper tables replace secondary access paths: `last_order`
//! points at a customer's most recent order and `delivery_cursor` holds the
//! oldest undelivered order of a district. Orders live in a ring of
//! `order_slots` per district, so the key space stays fixed while order ids
//! grow.

mod keys;
mod programs;
pub mod records;

pub use keys::{RecordId, RecordKeyMap, Table};
pub use programs::{Delivery, NewOrder, OrderStatus, Payment, StockLevel, TxnKind};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ConfigError;
use crate::client::{TxnProgram, Workload};
use crate::wire::{Key, Value};
use records::*;

/// Transaction mix in percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpccMix {
    pub new_order: u32,
    pub payment: u32,
    pub order_status: u32,
    pub delivery: u32,
    pub stock_level: u32,
}

impl Default for TpccMix {
    fn default() -> Self {
        TpccMix { new_order: 45, payment: 43, order_status: 4, delivery: 4, stock_level: 4 }
    }
}

impl TpccMix {
    pub fn only(kind: TxnKind) -> Self {
        let mut m = TpccMix { new_order: 0, payment: 0, order_status: 0, delivery: 0, stock_level: 0 };
        *m.weight_mut(kind) = 100;
        m
    }

    fn weight_mut(&mut self, kind: TxnKind) -> &mut u32 {
        match kind {
            TxnKind::NewOrder => &mut self.new_order,
            TxnKind::Payment => &mut self.payment,
            TxnKind::OrderStatus => &mut self.order_status,
            TxnKind::Delivery => &mut self.delivery,
            TxnKind::StockLevel => &mut self.stock_level,
        }
    }

    pub fn weights(&self) -> [(TxnKind, u32); 5] {
        [
            (TxnKind::NewOrder, self.new_order),
            (TxnKind::Payment, self.payment),
            (TxnKind::OrderStatus, self.order_status),
            (TxnKind::Delivery, self.delivery),
            (TxnKind::StockLevel, self.stock_level),
        ]
    }

    pub fn total(&self) -> u32 {
        self.weights().iter().map(|(_, w)| w).sum()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TxnKind {
        let mut x = rng.gen_range(0..self.total());
        for (kind, w) in self.weights() {
            if x < w {
                return kind;
            }
            x -= w;
        }
        unreachable!("mix weights sum to total")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpccLiteConfig {
    pub warehouses: u32,
    /// Per warehouse.
    pub districts: u32,
    /// Per district.
    pub customers: u32,
    pub items: u32,
    pub num_clients: usize,
    pub mix: TpccMix,
    /// Order ring size per district.
    pub order_slots: u32,
    pub min_order_lines: u32,
    pub max_order_lines: u32,
    /// Recent orders examined by Stock-Level.
    pub stock_level_orders: u32,
    pub seed: u64,
}

impl Default for TpccLiteConfig {
    fn default() -> Self {
        TpccLiteConfig {
            warehouses: 1,
            districts: 2,
            customers: 10,
            items: 50,
            num_clients: 8,
            mix: TpccMix::default(),
            order_slots: 64,
            min_order_lines: 5,
            max_order_lines: 15,
            stock_level_orders: 20,
            seed: 1,
        }
    }
}

impl TpccLiteConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Other(m));
        if self.mix.total() != 100 {
            return bad(format!("tpcc mix sums to {}%, not 100%", self.mix.total()));
        }
        if self.warehouses == 0 || self.districts == 0 || self.customers == 0 || self.items == 0 {
            return bad("tpcc cardinalities must be positive".into());
        }
        if self.min_order_lines == 0 || self.min_order_lines > self.max_order_lines || self.max_order_lines > self.items {
            return bad(format!("order lines {}..={} invalid for {} items", self.min_order_lines, self.max_order_lines, self.items));
        }
        if self.order_slots <= self.stock_level_orders {
            return bad(format!("order_slots {} must exceed stock_level_orders {}", self.order_slots, self.stock_level_orders));
        }
        if self.order_slots < self.customers {
            return bad(format!("order_slots {} must hold the {} initial orders", self.order_slots, self.customers));
        }
        RecordKeyMap::new(self).map(|_| ()).map_err(|e| ConfigError::Other(e.to_string()))
    }

    pub fn slot(&self, o_id: u32) -> u32 {
        o_id % self.order_slots
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("{table} needs {needed} keys, more than the {limit} a table can address")]
    KeySpace { table: &'static str, needed: u64, limit: u64 },
    #[error("{0}")]
    Config(String),
}

fn alpha<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

const LAST_NAME_SYLLABLES: [&str; 10] = ["BAR", "OUGHT", "ABLE", "PRI", "PRES", "ESE", "ANTI", "CALLY", "ATION", "EING"];

fn last_name(n: u32) -> String {
    let n = n % 1000;
    [n / 100, (n / 10) % 10, n % 10].iter().map(|&d| LAST_NAME_SYLLABLES[d as usize]).collect()
}

/// Initial orders per district: one per customer, the newest 30% undelivered.
fn initial_undelivered(customers: u32) -> u32 {
    (customers * 3).div_ceil(10)
}

/// Builds the initial database. Deterministic in `cfg.seed`.
pub fn tpcc_load(cfg: &TpccLiteConfig) -> Result<(Vec<(Key, Value)>, RecordKeyMap), LoadError> {
    cfg.validate().map_err(|e| LoadError::Config(e.to_string()))?;
    let map = RecordKeyMap::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<(Key, Value)> = Vec::new();
    let mut put = |id: RecordId, v: Value| pop.push((map.key(id), v));

    for i in 1..=cfg.items {
        let item = Item {
            i,
            im_id: rng.gen_range(1..=10_000),
            price: rng.gen_range(100..=10_000),
            name: text(&alpha(&mut rng, 14, 24)),
            data: text(&alpha(&mut rng, 26, 50)),
        };
        put(RecordId::Item { i }, item.to_value());
    }

    let district_ytd = 3_000_000u64;
    for w in 1..=cfg.warehouses {
        let wh = Warehouse {
            w,
            tax_bp: rng.gen_range(0..=2000),
            ytd: district_ytd * cfg.districts as u64,
            name: text(&alpha(&mut rng, 6, 10)),
            street: text(&alpha(&mut rng, 10, 20)),
            city: text(&alpha(&mut rng, 10, 20)),
            state: text(&alpha(&mut rng, 2, 2)),
            zip: text("123411111"),
        };
        put(RecordId::Warehouse { w }, wh.to_value());

        for i in 1..=cfg.items {
            let st = Stock {
                w,
                i,
                quantity: rng.gen_range(10..=100),
                dist_info: text(&alpha(&mut rng, 24, 24)),
                data: text(&alpha(&mut rng, 26, 50)),
                ..Stock::default()
            };
            put(RecordId::Stock { w, i }, st.to_value());
        }

        for d in 1..=cfg.districts {
            let orders = cfg.customers;
            let undelivered = initial_undelivered(orders);
            let dist = District {
                w,
                d,
                tax_bp: rng.gen_range(0..=2000),
                ytd: district_ytd,
                next_o_id: orders + 1,
                name: text(&alpha(&mut rng, 6, 10)),
                street: text(&alpha(&mut rng, 10, 20)),
                city: text(&alpha(&mut rng, 10, 20)),
                state: text(&alpha(&mut rng, 2, 2)),
                zip: text("123411111"),
            };
            put(RecordId::District { w, d }, dist.to_value());
            put(
                RecordId::DeliveryCursor { w, d },
                DeliveryCursor { w, d, next_o_id: orders - undelivered + 1 }.to_value(),
            );

            for c in 1..=cfg.customers {
                let cust = Customer {
                    w,
                    d,
                    c,
                    balance: -1000,
                    ytd_payment: 1000,
                    payment_cnt: 1,
                    delivery_cnt: 0,
                    discount_bp: rng.gen_range(0..=5000),
                    credit_lim: 5_000_000,
                    credit: text(if rng.gen_bool(0.1) { "BC" } else { "GC" }),
                    first: text(&alpha(&mut rng, 8, 16)),
                    middle: text("OE"),
                    last: text(&last_name(c - 1)),
                    phone: text(&format!("{:016}", rng.gen_range(0u64..10_000_000_000_000_000))),
                };
                put(RecordId::Customer { w, d, c }, cust.to_value());
            }

            let mut owners: Vec<u32> = (1..=cfg.customers).collect();
            owners.shuffle(&mut rng);
            for o_id in 1..=orders {
                let c = owners[(o_id - 1) as usize];
                let delivered = o_id <= orders - undelivered;
                let ol_cnt = rng.gen_range(cfg.min_order_lines..=cfg.max_order_lines);
                let slot = cfg.slot(o_id);
                let order = Order {
                    w,
                    d,
                    o_id,
                    c,
                    entry_d: o_id as u64,
                    carrier: if delivered { rng.gen_range(1..=10) } else { 0 },
                    ol_cnt,
                    all_local: 1,
                };
                put(RecordId::Order { w, d, slot }, order.to_value());
                for number in 1..=ol_cnt {
                    let line = OrderLine {
                        w,
                        d,
                        o_id,
                        number,
                        i: rng.gen_range(1..=cfg.items),
                        supply_w: w,
                        delivery_d: if delivered { o_id as u64 } else { 0 },
                        quantity: 5,
                        amount: if delivered { 0 } else { rng.gen_range(1..=999_999) },
                        dist_info: text(&alpha(&mut rng, 24, 24)),
                    };
                    put(RecordId::OrderLine { w, d, slot, number }, line.to_value());
                }
                put(RecordId::LastOrder { w, d, c }, LastOrder { w, d, c, o_id }.to_value());
            }
        }
    }
    Ok((pop, map))
}

/// Per-client TPC-C driver.
#[derive(Debug, Clone)]
pub struct TpccWorkload {
    cfg: TpccLiteConfig,
    keys: RecordKeyMap,
}

impl TpccWorkload {
    pub fn new(cfg: &TpccLiteConfig, keys: RecordKeyMap) -> Self {
        TpccWorkload { cfg: cfg.clone(), keys }
    }

    pub fn next_tpcc_txn(&mut self, rng: &mut ChaCha8Rng) -> Box<dyn TxnProgram> {
        let kind = self.cfg.mix.draw(rng);
        programs::build(kind, &self.cfg, &self.keys, rng)
    }
}

impl Workload for TpccWorkload {
    fn next_program(&mut self, rng: &mut ChaCha8Rng) -> Box<dyn TxnProgram> {
        self.next_tpcc_txn(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn scaled_cardinalities() {
        let cfg = TpccLiteConfig::default();
        let (pop, map) = tpcc_load(&cfg).unwrap();
        let count = |t: Table| pop.iter().filter(|(k, _)| map.decode(*k).unwrap().table() == t).count();
        assert_eq!(count(Table::Item), 50);
        assert_eq!(count(Table::District), 2);
        assert_eq!(count(Table::Warehouse), 1);
        assert_eq!(count(Table::Customer), 20);
        assert_eq!(count(Table::Stock), 50);
        assert_eq!(count(Table::Order), 20);
        assert_eq!(count(Table::LastOrder), 20);
        assert_eq!(count(Table::DeliveryCursor), 2);
    }

    #[test]
    fn keys_are_unique() {
        let (pop, _) = tpcc_load(&TpccLiteConfig::default()).unwrap();
        let keys: HashSet<Key> = pop.iter().map(|(k, _)| *k).collect();
        assert_eq!(keys.len(), pop.len());
    }

    #[test]
    fn load_is_deterministic_per_seed() {
        let cfg = TpccLiteConfig::default();
        assert_eq!(tpcc_load(&cfg).unwrap().0, tpcc_load(&cfg).unwrap().0);
        let other = TpccLiteConfig { seed: 2, ..cfg.clone() };
        assert_ne!(tpcc_load(&cfg).unwrap().0, tpcc_load(&other).unwrap().0);
    }

    #[test]
    fn warehouse_ytd_is_the_sum_of_district_ytd() {
        let cfg = TpccLiteConfig::default();
        let (pop, map) = tpcc_load(&cfg).unwrap();
        let get = |id| pop.iter().find(|(k, _)| *k == map.key(id)).unwrap().1;
        let w = Warehouse::from_value(&get(RecordId::Warehouse { w: 1 }));
        let sum: u64 = (1..=2).map(|d| District::from_value(&get(RecordId::District { w: 1, d })).ytd).sum();
        assert_eq!(w.ytd, sum);
    }

    #[test]
    fn mix_validation_and_draws() {
        assert!(TpccLiteConfig::default().validate().is_ok());
        let bad = TpccLiteConfig { mix: TpccMix { payment: 44, ..TpccMix::default() }, ..TpccLiteConfig::default() };
        assert!(bad.validate().is_err());
        let only = TpccMix::only(TxnKind::Payment);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| only.draw(&mut rng) == TxnKind::Payment));
        let mix = TpccMix::default();
        let n = 100_000;
        let payments = (0..n).filter(|_| mix.draw(&mut rng) == TxnKind::Payment).count();
        assert!((payments as f64 / n as f64 - 0.43).abs() < 0.01);
    }

    #[test]
    fn only_payment_programs_with_a_pure_payment_mix() {
        let cfg = TpccLiteConfig { mix: TpccMix::only(TxnKind::Payment), ..TpccLiteConfig::default() };
        let (_, map) = tpcc_load(&cfg).unwrap();
        let mut w = TpccWorkload::new(&cfg, map);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..500).all(|_| w.next_tpcc_txn(&mut rng).label() == "payment"));
    }
}
