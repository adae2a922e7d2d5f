//! Regression for the two-rule-set divergence scenario: an extender whose
//! critical point is a generator-region ordinal of the previous extender is
//! routed to different predecessors by the lambda and nu exchange rules,
//! and the dropped one-step model of the lambda tree is reproduced by the
//! two-extender sequence of the nu tree.

use std::collections::{BTreeMap, HashSet};

use serde::Deserialize;
use treecalc_core::premouse::{Degree, ExtenderInfo, LevelTable, WireTable};
use treecalc_core::tree::{IterationTree, Rules};
use treecalc_core::ultrapower::{extenders_equivalent_over, Embedding};
use treecalc_core::{iso, Arena, Token};

#[derive(Deserialize)]
struct IntroFixture {
    arena: Vec<String>,
    base: WireTable,
    successor: WireTable,
    step_embedding: Vec<(String, String)>,
}

struct Intro {
    arena: Arena,
    base: LevelTable,
    successor: LevelTable,
    e0: ExtenderInfo,
    e1: ExtenderInfo,
    step_emb: Embedding,
}

fn load() -> Intro {
    let path = format!("{}/../../fixtures/intro.json", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    let fx: IntroFixture = serde_json::from_str(&text).unwrap();
    assert_eq!(fx.base.arena, fx.arena);
    assert_eq!(fx.successor.arena, fx.arena);
    let (arena, base) = LevelTable::from_wire(&fx.base).unwrap();
    let (_, successor) = LevelTable::from_wire(&fx.successor).unwrap();
    base.validate(&arena).unwrap();
    successor.validate(&arena).unwrap();

    let e0 = base.levels[1].active.expect("base carries the first extender");
    let e1 = *successor.top_extender().expect("successor carries the second extender");
    // The scenario shape: nu(e0) <= cr(e1) < lambda(e0) < lh(e0) < lh(e1).
    assert!(arena.le(e0.nu, e1.cr) && arena.lt(e1.cr, e0.lambda));
    assert!(arena.lt(e0.lh, e1.lh));

    let mut map = BTreeMap::new();
    for (x, y) in &fx.step_embedding {
        map.insert(arena.lookup(x).unwrap(), arena.lookup(y).unwrap());
    }
    let step_emb = Embedding { map, critical: Some(e0.cr) };
    step_emb.validate(&arena).unwrap();
    Intro { arena, base, successor, e0, e1, step_emb }
}

fn tok(a: &Arena, name: &str) -> Token {
    a.lookup(name).unwrap()
}

/// Build the two-step tree under `rules`, with the posited successor model
/// spliced in as node 1 and the second extender played by the kernel.
fn build(fx: &Intro, rules: Rules) -> IterationTree {
    let mut t = IterationTree::new(fx.arena.clone(), fx.base.clone(), rules).unwrap();
    let tilde_nu = t.exchange_ordinal(&fx.e0);
    t.push_scripted(
        fx.e0,
        tilde_nu,
        0,
        fx.successor.clone(),
        Degree::Fin(1),
        fx.step_emb.clone(),
    );
    t.apply_plain(fx.e1).unwrap();
    t
}

#[test]
fn lambda_rules_drop_to_the_first_exit() {
    let fx = load();
    let t = build(&fx, Rules::JMax);
    let n2 = &t.nodes[2];
    assert_eq!(n2.pred, Some(0), "cr below lambda(e0) routes to the root");
    assert_eq!(n2.degree, Degree::Fin(0));
    assert!(n2.dropped && n2.dropped_deg);
    let ex0 = fx.base.segment(fx.e0.lh).unwrap();
    assert_eq!(n2.m_star.as_ref(), Some(&ex0), "applied segment is the first exit");
}

#[test]
fn nu_rules_stay_on_the_main_branch() {
    let fx = load();
    let u = build(&fx, Rules::WeaklyMsMax);
    let n2 = &u.nodes[2];
    assert_eq!(n2.pred, Some(1), "cr at nu(e0) routes past the nu exchange slot");
    assert_eq!(n2.degree, Degree::Fin(1));
    assert!(!n2.dropped && !n2.dropped_deg);
}

#[test]
fn step_embeddings_agree_on_the_common_domain() {
    let fx = load();
    let t = build(&fx, Rules::JMax);
    let u = build(&fx, Rules::WeaklyMsMax);
    let et = t.nodes[2].emb_star.as_ref().unwrap();
    let eu = u.nodes[2].emb_star.as_ref().unwrap();
    // Both step maps send cr(e1) to lambda(e1) and its successor level
    // height to lh(e1); the dropped map is a restriction of the full one.
    assert_eq!(et.apply(fx.e1.cr), Some(fx.e1.lambda));
    assert_eq!(eu.apply(fx.e1.cr), Some(fx.e1.lambda));
    assert_eq!(et.apply(tok(&t.arena, "w")), Some(fx.e1.lh));
    assert_eq!(eu.apply(tok(&u.arena, "w")), Some(fx.e1.lh));
    assert!(iso::embedding_extends(&t.arena, et, &u.arena, eu));
    assert!(iso::embedding_extends(&u.arena, eu, &t.arena, et));
}

#[test]
fn top_extender_of_the_dropped_model_matches_the_two_step_sequence() {
    let fx = load();
    let t = build(&fx, Rules::JMax);
    let m2 = &t.nodes[2].model;
    let f = *m2.top_extender().expect("dropped ultrapower has an active top");
    assert_eq!(f.cr, fx.e0.cr);
    assert_eq!(f.nu, fx.e1.nu);

    let ex0 = fx.base.segment(fx.e0.lh).unwrap();
    let base_names: HashSet<String> = fx.arena.to_names().into_iter().collect();
    let eq = extenders_equivalent_over(
        &t.arena,
        &[(f, m2.clone())],
        &[(fx.e0, ex0), (fx.e1, fx.successor.clone())],
        (&fx.base, Degree::Fin(1)),
        &base_names,
    )
    .unwrap();
    assert!(eq, "one application of F(M_2) differs from the e0,e1 sequence");
}
