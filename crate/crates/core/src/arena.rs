//! Order-maintenance arena for opaque ordinal tokens.
//!
//! Every ordinal-valued quantity in the calculus (heights, critical points,
//! projecta, ...) is a token in one of these arenas. Tokens carry a
//! construction-path name so that independent replays of the same
//! construction mint identically named tokens in the same order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Token(pub u32);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ArenaError {
    #[error("duplicate token name {0:?}")]
    DuplicateName(String),
    #[error("token {0:?} does not belong to this arena")]
    ForeignToken(Token),
    #[error("insert_between bounds are not ordered lo < hi")]
    BadBounds,
}

/// A strict total order of tokens, stable under growth: inserting a new
/// token never changes the relative order of existing tokens.
#[derive(Debug, Clone, Default)]
pub struct Arena {
    names: Vec<String>,
    by_name: HashMap<String, Token>,
    /// Tokens listed in ascending order.
    order: Vec<Token>,
    /// rank[t.0] = position of t in `order`.
    rank: Vec<u32>,
}

impl Arena {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, t: Token) -> bool {
        (t.0 as usize) < self.names.len()
    }

    pub fn name(&self, t: Token) -> &str {
        &self.names[t.0 as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<Token> {
        self.by_name.get(name).copied()
    }

    /// Tokens in ascending order.
    pub fn ordered(&self) -> &[Token] {
        &self.order
    }

    pub fn rank(&self, t: Token) -> usize {
        self.rank[t.0 as usize] as usize
    }

    fn fresh(&mut self, name: &str) -> Result<Token, ArenaError> {
        if self.by_name.contains_key(name) {
            return Err(ArenaError::DuplicateName(name.to_string()));
        }
        let t = Token(self.names.len() as u32);
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), t);
        Ok(t)
    }

    /// Mint a name not yet present by appending a disambiguating suffix.
    pub fn unique_name(&self, base: &str) -> String {
        if !self.by_name.contains_key(base) {
            return base.to_string();
        }
        let mut k = 2usize;
        loop {
            let cand = format!("{base}#{k}");
            if !self.by_name.contains_key(&cand) {
                return cand;
            }
            k += 1;
        }
    }

    fn insert_at(&mut self, pos: usize, t: Token) {
        self.order.insert(pos, t);
        self.rank.push(0);
        for (i, u) in self.order.iter().enumerate().skip(pos) {
            self.rank[u.0 as usize] = i as u32;
        }
    }

    /// New token strictly above all existing tokens.
    pub fn fresh_top(&mut self, name: &str) -> Result<Token, ArenaError> {
        let t = self.fresh(name)?;
        let pos = self.order.len();
        self.insert_at(pos, t);
        Ok(t)
    }

    /// New token with `lo < t < hi`, placed immediately below `hi`.
    pub fn insert_between(&mut self, lo: Token, hi: Token, name: &str) -> Result<Token, ArenaError> {
        if !self.contains(lo) {
            return Err(ArenaError::ForeignToken(lo));
        }
        if !self.contains(hi) {
            return Err(ArenaError::ForeignToken(hi));
        }
        if self.rank(lo) >= self.rank(hi) {
            return Err(ArenaError::BadBounds);
        }
        let pos = self.rank(hi);
        let t = self.fresh(name)?;
        self.insert_at(pos, t);
        Ok(t)
    }

    pub fn compare(&self, a: Token, b: Token) -> std::cmp::Ordering {
        self.rank(a).cmp(&self.rank(b))
    }

    pub fn lt(&self, a: Token, b: Token) -> bool {
        self.rank(a) < self.rank(b)
    }

    pub fn le(&self, a: Token, b: Token) -> bool {
        self.rank(a) <= self.rank(b)
    }

    pub fn max(&self, a: Token, b: Token) -> Token {
        if self.lt(a, b) {
            b
        } else {
            a
        }
    }

    pub fn min(&self, a: Token, b: Token) -> Token {
        if self.lt(a, b) {
            a
        } else {
            b
        }
    }

    /// Serializes as the ordered list of token names.
    pub fn to_names(&self) -> Vec<String> {
        self.order.iter().map(|t| self.names[t.0 as usize].clone()).collect()
    }

    /// Rebuild an arena from an ordered name list.
    pub fn from_names(names: &[String]) -> Result<Self, ArenaError> {
        let mut a = Arena::new();
        for n in names {
            a.fresh_top(n)?;
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cmp::Ordering;

    #[test]
    fn fresh_top_orders() {
        let mut a = Arena::new();
        let x = a.fresh_top("a").unwrap();
        let y = a.fresh_top("b").unwrap();
        let z = a.fresh_top("c").unwrap();
        assert_eq!(a.compare(x, x), Ordering::Equal);
        assert!(a.lt(x, y));
        assert!(a.lt(y, z));
        assert!(a.lt(x, z));
        assert_eq!(a.fresh_top("a"), Err(ArenaError::DuplicateName("a".into())));
    }

    #[test]
    fn insert_between_basic() {
        let mut a = Arena::new();
        let lo = a.fresh_top("a").unwrap();
        let hi = a.fresh_top("c").unwrap();
        let mid = a.insert_between(lo, hi, "b").unwrap();
        assert!(a.lt(lo, mid) && a.lt(mid, hi));

        let x = a.insert_between(lo, mid, "x").unwrap();
        assert!(a.lt(lo, x) && a.lt(x, mid) && a.lt(x, hi));
        assert_eq!(a.insert_between(hi, lo, "y"), Err(ArenaError::BadBounds));
    }

    #[test]
    fn repeated_interleave_is_stable() {
        let mut a = Arena::new();
        let lo = a.fresh_top("lo").unwrap();
        let hi = a.fresh_top("hi").unwrap();
        let mut minted = vec![lo, hi];
        let mut log: Vec<(Token, Token, Ordering)> = Vec::new();
        for i in 0..100 {
            for &x in &minted {
                for &y in &minted {
                    log.push((x, y, a.compare(x, y)));
                }
            }
            let t = a.insert_between(lo, hi, &format!("m{i}")).unwrap();
            for &(x, y, ord) in &log {
                assert_eq!(a.compare(x, y), ord, "growth reordered {x:?},{y:?}");
            }
            minted.push(t);
        }
    }

    #[test]
    fn round_trip_names() {
        let mut a = Arena::new();
        let lo = a.fresh_top("lo").unwrap();
        let hi = a.fresh_top("hi").unwrap();
        a.insert_between(lo, hi, "mid").unwrap();
        let names = a.to_names();
        assert_eq!(names, vec!["lo".to_string(), "mid".into(), "hi".into()]);
        let b = Arena::from_names(&names).unwrap();
        assert_eq!(b.to_names(), names);
    }

    /// Oracle: a plain Vec of names kept in order, with insertions by index.
    #[derive(Default)]
    struct NaiveOrder(Vec<String>);

    proptest! {
        #[test]
        fn agrees_with_naive_oracle(ops in proptest::collection::vec((0u8..2, 0usize..64, 0usize..64), 1..120)) {
            let mut arena = Arena::new();
            let mut naive = NaiveOrder::default();
            for (i, (kind, lo_i, hi_i)) in ops.into_iter().enumerate() {
                let name = format!("t{i}");
                if arena.is_empty() || kind == 0 {
                    arena.fresh_top(&name).unwrap();
                    naive.0.push(name);
                } else {
                    let n = arena.len();
                    let (mut lp, mut hp) = (lo_i % n, hi_i % n);
                    if lp > hp {
                        std::mem::swap(&mut lp, &mut hp);
                    }
                    if lp == hp {
                        arena.fresh_top(&name).unwrap();
                        naive.0.push(name);
                    } else {
                        let lo = arena.ordered()[lp];
                        let hi = arena.ordered()[hp];
                        arena.insert_between(lo, hi, &name).unwrap();
                        naive.0.insert(hp, name);
                    }
                }
            }
            let pos: std::collections::HashMap<&str, usize> =
                naive.0.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            for &x in arena.ordered() {
                for &y in arena.ordered() {
                    let want = pos[arena.name(x)].cmp(&pos[arena.name(y)]);
                    prop_assert_eq!(arena.compare(x, y), want);
                }
            }
        }
    }
}
