//! Random-tree behavior of the kernel: block structure, padding
//! conventions, validation, transcripts, and serialization.

use treecalc_core::gen::{random_j_premouse, seeded_rng};
use treecalc_core::premouse::ExtenderInfo;
use treecalc_core::tree::{random_tree, validate_tree, GameTranscript, IterationTree, Rules};
use treecalc_core::Arena;

fn make(seed: u64, rules: Rules, budget: usize) -> (Arena, treecalc_core::premouse::LevelTable, IterationTree) {
    let mut rng = seeded_rng(seed);
    let mut arena = Arena::new();
    let base = random_j_premouse(&mut arena, &mut rng, 20, false);
    let tree = random_tree(arena.clone(), base.clone(), &mut rng, budget, rules)
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    (arena, base, tree)
}

#[test]
fn lifting_trees_validate_and_have_block_structure() {
    let mut with_block = 0usize;
    let mut with_drop = 0usize;
    let mut nonempty = 0usize;
    for seed in 0..120u64 {
        let (_, _, tree) = make(seed, Rules::LiftingMsMax, 4);
        let violations = validate_tree(&tree);
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
        if tree.len() > 1 {
            nonempty += 1;
        }
        for (start, end) in tree.blocks() {
            if tree.nodes[end].exit.is_none() {
                continue;
            }
            if end > start {
                with_block += 1;
            }
            // Within a block, lh decreases and nu increases slot by slot.
            let exits: Vec<ExtenderInfo> =
                (start..=end).map(|i| tree.nodes[i].exit.unwrap()).collect();
            for w in exits.windows(2) {
                assert!(tree.arena.lt(w[1].lh, w[0].lh));
                assert!(tree.arena.lt(w[0].nu, w[1].nu));
            }
            // Exchange ordinals on lifting trees are the extender nus.
            for i in start..=end {
                assert_eq!(tree.nodes[i].tilde_nu, Some(tree.nodes[i].exit.unwrap().nu));
            }
        }
        if tree.nodes.iter().any(|n| n.dropped) {
            with_drop += 1;
        }
    }
    assert!(nonempty >= 90, "only {nonempty}/120 trees took a step");
    assert!(with_block >= 30, "only {with_block} multi-slot blocks");
    assert!(with_drop >= 20, "only {with_drop}/120 trees saw a drop");
}

#[test]
fn padded_j_trees_follow_the_padding_convention() {
    let mut padded = 0usize;
    for seed in 0..120u64 {
        let (_, _, tree) = make(seed, Rules::JMax, 4);
        for (start, end) in tree.blocks() {
            let real = (start..=end).filter(|&i| tree.nodes[i].exit.is_some()).count();
            if tree.nodes[end].exit.is_none() && end == tree.len() - 1 {
                continue; // unfinished tail block
            }
            // Exactly the final slot of a block is real; earlier slots are
            // padding with labels, and their successors point straight back.
            assert_eq!(real, 1, "seed {seed}: block ({start},{end})");
            assert!(tree.nodes[end].exit.is_some());
            for i in start..end {
                assert!(tree.nodes[i].label.is_some());
                assert!(tree.nodes[i].tilde_nu.is_some());
                assert_eq!(tree.nodes[i + 1].pred, Some(i));
                assert!(!tree.nodes[i + 1].dropped);
                padded += 1;
            }
            // The real slot exchanges at lambda.
            let e = tree.nodes[end].exit.unwrap();
            assert_eq!(tree.nodes[end].tilde_nu, Some(e.lambda));
        }
        // Labels of each block are the dropdown of the block's first model
        // and chosen extender, minus a leading very-special top.
        for (start, end) in tree.blocks() {
            let Some(e) = tree.nodes[end].exit else { continue };
            let labels: Vec<ExtenderInfo> =
                (start..end).map(|i| tree.nodes[i].label.unwrap()).collect();
            let want = tree.despec_rev_e_dropdown(start, &e).unwrap();
            assert_eq!(labels, want, "seed {seed}");
        }
    }
    assert!(padded >= 40, "only {padded} padding slots over all seeds");
}

#[test]
fn transcripts_replay_byte_identically() {
    for rules in [Rules::LiftingMsMax, Rules::JMax, Rules::WeaklyMsMax] {
        for seed in 0..40u64 {
            let (arena, base, tree) = make(seed, rules, 4);
            let transcript = GameTranscript::of(&tree);
            let replayed = transcript.replay(arena, base).unwrap();
            let a = serde_json::to_vec(&tree.to_wire()).unwrap();
            let b = serde_json::to_vec(&replayed.to_wire()).unwrap();
            assert_eq!(a, b, "seed {seed} rules {rules:?}");
        }
    }
}

#[test]
fn wire_round_trip_preserves_trees() {
    for seed in 0..40u64 {
        let (_, _, tree) = make(seed, Rules::LiftingMsMax, 4);
        let wire = tree.to_wire();
        let back = IterationTree::from_wire(&wire).unwrap();
        assert_eq!(serde_json::to_string(&back.to_wire()).unwrap(),
                   serde_json::to_string(&wire).unwrap());
    }
}

#[test]
fn dot_rendering_mentions_every_node() {
    let (_, _, tree) = make(3, Rules::LiftingMsMax, 4);
    let dot = tree.to_dot();
    assert!(dot.starts_with("digraph"));
    for i in 0..tree.len() {
        assert!(dot.contains(&format!("n{i} ")), "missing node {i}");
    }
}

#[test]
fn weakly_ms_trees_validate() {
    for seed in 0..60u64 {
        let (_, _, tree) = make(seed, Rules::WeaklyMsMax, 4);
        let violations = validate_tree(&tree);
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
    }
}
