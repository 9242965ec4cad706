use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::records::*;
use super::{RecordId, RecordKeyMap, TpccLiteConfig};
use crate::client::{ExecContext, Missing, TxnProgram};
use crate::wire::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxnKind {
    NewOrder,
    Payment,
    OrderStatus,
    Delivery,
    StockLevel,
}

impl TxnKind {
    pub fn label(self) -> &'static str {
        match self {
            TxnKind::NewOrder => "new_order",
            TxnKind::Payment => "payment",
            TxnKind::OrderStatus => "order_status",
            TxnKind::Delivery => "delivery",
            TxnKind::StockLevel => "stock_level",
        }
    }
}

/// Typed access to records through an [`ExecContext`].
struct Db<'c, 'a> {
    ctx: &'c mut ExecContext<'a>,
    keys: &'c RecordKeyMap,
}

impl Db<'_, '_> {
    fn get(&mut self, id: RecordId) -> Result<Value, Missing> {
        self.ctx.get(self.keys.key(id))
    }

    fn put(&mut self, id: RecordId, v: Value) {
        self.ctx.put(self.keys.key(id), v);
    }

    fn require(&self, ids: impl IntoIterator<Item = RecordId>) -> Result<(), Missing> {
        self.ctx.require(ids.into_iter().map(|id| self.keys.key(id)))
    }
}

pub(super) fn build(kind: TxnKind, cfg: &TpccLiteConfig, keys: &RecordKeyMap, rng: &mut ChaCha8Rng) -> Box<dyn TxnProgram> {
    let w = rng.gen_range(1..=cfg.warehouses);
    let d = rng.gen_range(1..=cfg.districts);
    let c = rng.gen_range(1..=cfg.customers);
    let keys = *keys;
    let cfg = cfg.clone();
    match kind {
        TxnKind::NewOrder => {
            let n = rng.gen_range(cfg.min_order_lines..=cfg.max_order_lines) as usize;
            let lines = sample(rng, cfg.items as usize, n).into_iter().map(|i| (i as u32 + 1, rng.gen_range(1..=10))).collect();
            Box::new(NewOrder { cfg, keys, w, d, c, lines })
        }
        TxnKind::Payment => Box::new(Payment { keys, w, d, c, amount: rng.gen_range(100..=500_000) }),
        TxnKind::OrderStatus => Box::new(OrderStatus { cfg, keys, w, d, c }),
        TxnKind::Delivery => Box::new(Delivery { cfg, keys, w, carrier: rng.gen_range(1..=10) }),
        TxnKind::StockLevel => Box::new(StockLevel { cfg, keys, w, d, threshold: rng.gen_range(10..=20) }),
    }
}

/// Enters an order of distinct items: takes the district's next order id,
/// updates stock, writes the order, its lines and the customer's last-order
/// pointer.
#[derive(Debug, Clone)]
pub struct NewOrder {
    pub cfg: TpccLiteConfig,
    pub keys: RecordKeyMap,
    pub w: u32,
    pub d: u32,
    pub c: u32,
    /// (item, quantity)
    pub lines: Vec<(u32, u32)>,
}

impl TxnProgram for NewOrder {
    fn label(&self) -> &'static str {
        TxnKind::NewOrder.label()
    }

    fn execute(&mut self, ctx: &mut ExecContext<'_>) -> Result<(), Missing> {
        let (w, d, c) = (self.w, self.d, self.c);
        let mut db = Db { ctx, keys: &self.keys };
        let mut needed = vec![RecordId::Warehouse { w }, RecordId::District { w, d }, RecordId::Customer { w, d, c }];
        for &(i, _) in &self.lines {
            needed.push(RecordId::Item { i });
            needed.push(RecordId::Stock { w, i });
        }
        db.require(needed)?;

        let _wh = Warehouse::from_value(&db.get(RecordId::Warehouse { w })?);
        let mut dist = District::from_value(&db.get(RecordId::District { w, d })?);
        let _cust = Customer::from_value(&db.get(RecordId::Customer { w, d, c })?);
        let o_id = dist.next_o_id;
        dist.next_o_id += 1;
        db.put(RecordId::District { w, d }, dist.to_value());

        let slot = self.cfg.slot(o_id);
        for (n, &(i, qty)) in self.lines.iter().enumerate() {
            let item = Item::from_value(&db.get(RecordId::Item { i })?);
            let mut st = Stock::from_value(&db.get(RecordId::Stock { w, i })?);
            st.quantity = if st.quantity >= qty + 10 { st.quantity - qty } else { st.quantity + 91 - qty };
            st.ytd += qty;
            st.order_cnt += 1;
            db.put(RecordId::Stock { w, i }, st.to_value());
            let number = n as u32 + 1;
            let line = OrderLine {
                w,
                d,
                o_id,
                number,
                i,
                supply_w: w,
                delivery_d: 0,
                quantity: qty,
                amount: qty * item.price,
                dist_info: st.dist_info[..].try_into().expect("24-byte field"),
            };
            db.put(RecordId::OrderLine { w, d, slot, number }, line.to_value());
        }
        let order = Order {
            w,
            d,
            o_id,
            c,
            entry_d: o_id as u64,
            carrier: 0,
            ol_cnt: self.lines.len() as u32,
            all_local: 1,
        };
        db.put(RecordId::Order { w, d, slot }, order.to_value());
        db.put(RecordId::LastOrder { w, d, c }, LastOrder { w, d, c, o_id }.to_value());
        Ok(())
    }

    fn refetch_on_abort(&self) -> bool {
        true
    }
}

/// Records a payment: warehouse, district and customer are read and updated.
#[derive(Debug, Clone)]
pub struct Payment {
    pub keys: RecordKeyMap,
    pub w: u32,
    pub d: u32,
    pub c: u32,
    /// Cents.
    pub amount: u32,
}

impl TxnProgram for Payment {
    fn label(&self) -> &'static str {
        TxnKind::Payment.label()
    }

    fn execute(&mut self, ctx: &mut ExecContext<'_>) -> Result<(), Missing> {
        let (w, d, c) = (self.w, self.d, self.c);
        let mut db = Db { ctx, keys: &self.keys };
        db.require([RecordId::Warehouse { w }, RecordId::District { w, d }, RecordId::Customer { w, d, c }])?;
        let mut wh = Warehouse::from_value(&db.get(RecordId::Warehouse { w })?);
        let mut dist = District::from_value(&db.get(RecordId::District { w, d })?);
        let mut cust = Customer::from_value(&db.get(RecordId::Customer { w, d, c })?);
        let amount = self.amount as u64;
        wh.ytd += amount;
        dist.ytd += amount;
        cust.balance -= amount as i64;
        cust.ytd_payment += amount;
        cust.payment_cnt += 1;
        db.put(RecordId::Warehouse { w }, wh.to_value());
        db.put(RecordId::District { w, d }, dist.to_value());
        db.put(RecordId::Customer { w, d, c }, cust.to_value());
        Ok(())
    }
}

/// Reads a customer, their most recent order and its lines.
#[derive(Debug, Clone)]
pub struct OrderStatus {
    pub cfg: TpccLiteConfig,
    pub keys: RecordKeyMap,
    pub w: u32,
    pub d: u32,
    pub c: u32,
}

impl TxnProgram for OrderStatus {
    fn label(&self) -> &'static str {
        TxnKind::OrderStatus.label()
    }

    fn execute(&mut self, ctx: &mut ExecContext<'_>) -> Result<(), Missing> {
        let (w, d, c) = (self.w, self.d, self.c);
        let mut db = Db { ctx, keys: &self.keys };
        db.require([RecordId::Customer { w, d, c }, RecordId::LastOrder { w, d, c }])?;
        db.get(RecordId::Customer { w, d, c })?;
        let last = LastOrder::from_value(&db.get(RecordId::LastOrder { w, d, c })?);
        if last.o_id == 0 {
            return Ok(());
        }
        let slot = self.cfg.slot(last.o_id);
        let order = Order::from_value(&db.get(RecordId::Order { w, d, slot })?);
        if order.o_id != last.o_id {
            return Ok(());
        }
        db.require((1..=order.ol_cnt).map(|number| RecordId::OrderLine { w, d, slot, number }))?;
        for number in 1..=order.ol_cnt {
            db.get(RecordId::OrderLine { w, d, slot, number })?;
        }
        Ok(())
    }
}

/// Delivers the oldest undelivered order of every district of a warehouse.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub cfg: TpccLiteConfig,
    pub keys: RecordKeyMap,
    pub w: u32,
    pub carrier: u32,
}

impl TxnProgram for Delivery {
    fn label(&self) -> &'static str {
        TxnKind::Delivery.label()
    }

    fn execute(&mut self, ctx: &mut ExecContext<'_>) -> Result<(), Missing> {
        let w = self.w;
        let mut db = Db { ctx, keys: &self.keys };
        let districts = 1..=self.cfg.districts;
        db.require(districts.clone().flat_map(|d| [RecordId::DeliveryCursor { w, d }, RecordId::District { w, d }]))?;
        for d in districts {
            let mut cursor = DeliveryCursor::from_value(&db.get(RecordId::DeliveryCursor { w, d })?);
            let dist = District::from_value(&db.get(RecordId::District { w, d })?);
            // Orders that fell out of the ring are never delivered.
            let oldest_kept = dist.next_o_id.saturating_sub(self.cfg.order_slots);
            let o_id = cursor.next_o_id.max(oldest_kept);
            if o_id >= dist.next_o_id {
                continue;
            }
            let slot = self.cfg.slot(o_id);
            let mut order = Order::from_value(&db.get(RecordId::Order { w, d, slot })?);
            cursor.next_o_id = o_id + 1;
            db.put(RecordId::DeliveryCursor { w, d }, cursor.to_value());
            if order.o_id != o_id {
                continue;
            }
            let lines: Vec<RecordId> = (1..=order.ol_cnt).map(|number| RecordId::OrderLine { w, d, slot, number }).collect();
            let cust_id = RecordId::Customer { w, d, c: order.c };
            db.require(lines.iter().copied().chain([cust_id]))?;
            let mut total = 0u64;
            for id in lines {
                let mut line = OrderLine::from_value(&db.get(id)?);
                total += line.amount as u64;
                line.delivery_d = o_id as u64;
                db.put(id, line.to_value());
            }
            order.carrier = self.carrier;
            db.put(RecordId::Order { w, d, slot }, order.to_value());
            let mut cust = Customer::from_value(&db.get(cust_id)?);
            cust.balance += total as i64;
            cust.delivery_cnt += 1;
            db.put(cust_id, cust.to_value());
        }
        Ok(())
    }

    fn refetch_on_abort(&self) -> bool {
        true
    }
}

/// Counts distinct items of a district's recent orders whose stock is below
/// `threshold`.
#[derive(Debug, Clone)]
pub struct StockLevel {
    pub cfg: TpccLiteConfig,
    pub keys: RecordKeyMap,
    pub w: u32,
    pub d: u32,
    pub threshold: u32,
}

impl StockLevel {
    /// Runs the program and returns the low-stock count.
    pub fn low_stock(&self, ctx: &mut ExecContext<'_>) -> Result<u32, Missing> {
        let (w, d) = (self.w, self.d);
        let mut db = Db { ctx, keys: &self.keys };
        db.require([RecordId::District { w, d }])?;
        let dist = District::from_value(&db.get(RecordId::District { w, d })?);
        let first = dist.next_o_id.saturating_sub(self.cfg.stock_level_orders).max(1);
        let orders: Vec<u32> = (first..dist.next_o_id).collect();
        db.require(orders.iter().map(|&o| RecordId::Order { w, d, slot: self.cfg.slot(o) }))?;
        let mut lines = Vec::new();
        for &o in &orders {
            let slot = self.cfg.slot(o);
            let order = Order::from_value(&db.get(RecordId::Order { w, d, slot })?);
            if order.o_id == o {
                lines.extend((1..=order.ol_cnt).map(|number| RecordId::OrderLine { w, d, slot, number }));
            }
        }
        db.require(lines.iter().copied())?;
        let mut items = Vec::new();
        for id in lines {
            items.push(OrderLine::from_value(&db.get(id)?).i);
        }
        items.sort_unstable();
        items.dedup();
        items.retain(|&i| i != 0);
        db.require(items.iter().map(|&i| RecordId::Stock { w, i }))?;
        let mut low = 0;
        for i in items {
            if Stock::from_value(&db.get(RecordId::Stock { w, i })?).quantity < self.threshold {
                low += 1;
            }
        }
        Ok(low)
    }
}

impl TxnProgram for StockLevel {
    fn label(&self) -> &'static str {
        TxnKind::StockLevel.label()
    }

    fn execute(&mut self, ctx: &mut ExecContext<'_>) -> Result<(), Missing> {
        self.low_stock(ctx).map(|_| ())
    }

    fn refetch_on_abort(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::super::{tpcc_load, Table};
    use super::*;
    use crate::wire::Key;
    use std::collections::{BTreeSet, HashMap};

    fn loaded() -> (TpccLiteConfig, RecordKeyMap, HashMap<Key, Value>) {
        let cfg = TpccLiteConfig::default();
        let (pop, keys) = tpcc_load(&cfg).unwrap();
        (cfg, keys, pop.into_iter().collect())
    }

    /// Runs `p` to completion as a client would, fetching each missing batch
    /// from `db` first.
    fn run(p: &mut dyn TxnProgram, db: &HashMap<Key, Value>, local: &mut HashMap<Key, Value>) -> crate::wire::TransactionSet {
        loop {
            let mut ctx = ExecContext::new(local);
            match p.execute(&mut ctx) {
                Ok(()) => return ctx.into_set(),
                Err(Missing(keys)) => {
                    for k in keys {
                        local.insert(k, db.get(&k).copied().unwrap_or(Value::ZERO));
                    }
                }
            }
        }
    }

    fn tables(keys: &RecordKeyMap, ks: impl IntoIterator<Item = Key>) -> BTreeSet<Table> {
        ks.into_iter().map(|k| keys.decode(k).unwrap().table()).collect()
    }

    #[test]
    fn payment_writes_three_records_it_compares() {
        let (_, keys, db) = loaded();
        let mut p = Payment { keys, w: 1, d: 2, c: 3, amount: 500 };
        let set = run(&mut p, &db, &mut HashMap::new());
        assert_eq!(set.writes.len(), 3);
        let written: BTreeSet<Key> = set.writes.iter().map(|w| w.0).collect();
        let compared: BTreeSet<Key> = set.compares.iter().map(|c| c.0).collect();
        assert_eq!(written, compared);
        assert_eq!(tables(&keys, written), [Table::Warehouse, Table::District, Table::Customer].into());
        let wh = set.writes.iter().find(|(k, _)| *k == keys.key(RecordId::Warehouse { w: 1 })).unwrap();
        assert_eq!(Warehouse::from_value(&wh.1).ytd, 6_000_000 + 500);
    }

    #[test]
    fn order_status_reads_customer_and_pointer_and_writes_nothing() {
        let (cfg, keys, db) = loaded();
        let mut p = OrderStatus { cfg, keys, w: 1, d: 1, c: 4 };
        let set = run(&mut p, &db, &mut HashMap::new());
        assert!(set.writes.is_empty());
        let t = tables(&keys, set.compares.iter().map(|c| c.0));
        assert!(t.contains(&Table::Customer) && t.contains(&Table::LastOrder));
        assert!(!t.contains(&Table::Stock));
    }

    #[test]
    fn new_order_advances_the_district_and_points_the_customer_at_it() {
        let (cfg, keys, db) = loaded();
        let mut p = NewOrder { cfg: cfg.clone(), keys, w: 1, d: 1, c: 2, lines: vec![(3, 4), (7, 1), (9, 9), (11, 2), (13, 5)] };
        let set = run(&mut p, &db, &mut HashMap::new());
        let get = |id| set.writes.iter().find(|(k, _)| *k == keys.key(id)).map(|w| w.1);
        let dist = District::from_value(&get(RecordId::District { w: 1, d: 1 }).unwrap());
        assert_eq!(dist.next_o_id, cfg.customers + 2);
        let last = LastOrder::from_value(&get(RecordId::LastOrder { w: 1, d: 1, c: 2 }).unwrap());
        assert_eq!(last.o_id, cfg.customers + 1);
        let order = Order::from_value(&get(RecordId::Order { w: 1, d: 1, slot: cfg.slot(last.o_id) }).unwrap());
        assert_eq!((order.c, order.ol_cnt), (2, 5));
        assert_eq!(set.writes.len(), 1 + 5 + 5 + 1 + 1);
    }

    #[test]
    fn delivery_moves_every_cursor() {
        let (cfg, keys, db) = loaded();
        let mut p = Delivery { cfg: cfg.clone(), keys, w: 1, carrier: 4 };
        let set = run(&mut p, &db, &mut HashMap::new());
        for d in 1..=cfg.districts {
            let cursor = set.writes.iter().find(|(k, _)| *k == keys.key(RecordId::DeliveryCursor { w: 1, d })).unwrap();
            assert_eq!(DeliveryCursor::from_value(&cursor.1).next_o_id, 9);
        }
        let orders: Vec<Order> = set
            .writes
            .iter()
            .filter(|(k, _)| keys.decode(*k).unwrap().table() == Table::Order)
            .map(|(_, v)| Order::from_value(v))
            .collect();
        assert_eq!(orders.len(), 2);
        assert!(orders.iter().all(|o| o.carrier == 4 && o.o_id == 8));
    }

    #[test]
    fn stock_level_is_read_only() {
        let (cfg, keys, db) = loaded();
        let mut p = StockLevel { cfg, keys, w: 1, d: 2, threshold: 101 };
        let mut local = HashMap::new();
        let set = run(&mut p, &db, &mut local);
        assert!(set.writes.is_empty());
        let mut ctx = ExecContext::new(&local);
        let low = p.low_stock(&mut ctx).unwrap();
        assert!(low > 0);
        assert!(tables(&keys, set.compares.iter().map(|c| c.0)).contains(&Table::Stock));
    }

    #[test]
    fn compare_set_equals_read_set_for_every_program() {
        let (cfg, keys, db) = loaded();
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        for kind in [TxnKind::NewOrder, TxnKind::Payment, TxnKind::OrderStatus, TxnKind::Delivery, TxnKind::StockLevel] {
            for _ in 0..20 {
                let mut p = build(kind, &cfg, &keys, &mut rng);
                let mut local = HashMap::new();
                run(p.as_mut(), &db, &mut local);
                let mut ctx = ExecContext::new(&local);
                p.execute(&mut ctx).unwrap();
                let reads: Vec<(Key, Value)> = ctx.read_set().iter().map(|(&k, &v)| (k, v)).collect();
                assert_eq!(ctx.into_set().compares, reads, "{}", kind.label());
            }
        }
    }
}
