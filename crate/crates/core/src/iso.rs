//! Support isomorphism: the artifact's notion of equality for models and
//! extenders built in different arenas.
//!
//! Two tables are equal up to support isomorphism when their level
//! structure matches field-for-field and the induced token pairing is an
//! order isomorphism fixing every token that belongs to the shared base
//! region (identified by name).

use std::collections::{BTreeMap, HashSet};

use crate::arena::{Arena, Token};
use crate::premouse::LevelTable;
use crate::ultrapower::Embedding;

#[derive(Debug, Clone, Default)]
pub struct SupportIso {
    /// Token of the left arena to token of the right arena.
    pub map: BTreeMap<Token, Token>,
}

impl SupportIso {
    pub fn get(&self, t: Token) -> Option<Token> {
        self.map.get(&t).copied()
    }
}

fn add_pair(iso: &mut SupportIso, rev: &mut BTreeMap<Token, Token>, x: Token, y: Token) -> bool {
    if let Some(&y0) = iso.map.get(&x) {
        return y0 == y;
    }
    if let Some(&x0) = rev.get(&y) {
        return x0 == x;
    }
    iso.map.insert(x, y);
    rev.insert(y, x);
    true
}

/// Match two tables structurally, returning the induced pairing if it is a
/// well-defined order isomorphism fixing `base` names.
pub fn table_iso(
    la: &Arena,
    ta: &LevelTable,
    ra: &Arena,
    tb: &LevelTable,
    base: &HashSet<String>,
) -> Option<SupportIso> {
    if ta.flavor != tb.flavor || ta.levels.len() != tb.levels.len() {
        return None;
    }
    let mut iso = SupportIso::default();
    let mut rev = BTreeMap::new();
    for (x, y) in ta.levels.iter().zip(&tb.levels) {
        if x.projecta.len() != y.projecta.len() || x.active.is_some() != y.active.is_some() {
            return None;
        }
        if !add_pair(&mut iso, &mut rev, x.height, y.height) {
            return None;
        }
        if !add_pair(&mut iso, &mut rev, x.lgcd, y.lgcd) {
            return None;
        }
        for (&p, &q) in x.projecta.iter().zip(&y.projecta) {
            if !add_pair(&mut iso, &mut rev, p, q) {
                return None;
            }
        }
        if let (Some(f), Some(g)) = (&x.active, &y.active) {
            if f.flavor != g.flavor || f.nu_is_limit_of_generators != g.nu_is_limit_of_generators {
                return None;
            }
            for (p, q) in [(f.cr, g.cr), (f.nu, g.nu), (f.lambda, g.lambda), (f.lh, g.lh)] {
                if !add_pair(&mut iso, &mut rev, p, q) {
                    return None;
                }
            }
        }
    }
    // Order preservation across all pairs.
    let pairs: Vec<(Token, Token)> = iso.map.iter().map(|(&x, &y)| (x, y)).collect();
    for &(x0, y0) in &pairs {
        for &(x1, y1) in &pairs {
            if la.compare(x0, x1) != ra.compare(y0, y1) {
                return None;
            }
        }
    }
    // Base tokens are fixed (matched by name).
    for &(x, y) in &pairs {
        let xn = la.name(x);
        let yn = ra.name(y);
        if (base.contains(xn) || base.contains(yn)) && xn != yn {
            return None;
        }
    }
    Some(iso)
}

/// Whether two embeddings agree pointwise modulo `iso` on their common
/// domain, where domains are matched through `iso` itself.
pub fn embeddings_agree(e1: &Embedding, e2: &Embedding, iso: &SupportIso) -> bool {
    for (&x, &y) in &e1.map {
        if let Some(x2) = iso.get(x) {
            if let Some(&y2) = e2.map.get(&x2) {
                if iso.get(y) != Some(y2) {
                    return false;
                }
            }
        }
    }
    true
}

/// Cross-arena embedding agreement by construction-path names: wherever a
/// domain token of `small` also names a domain token of `big`, the images
/// carry the same name.
pub fn embedding_extends(
    la: &Arena,
    small: &Embedding,
    ra: &Arena,
    big: &Embedding,
) -> bool {
    for (&x, &y) in &small.map {
        if let Some(x2) = ra.lookup(la.name(x)) {
            if let Some(&y2) = big.map.get(&x2) {
                if la.name(y) != ra.name(y2) {
                    return false;
                }
            }
        }
    }
    true
}
