//! Conversion between nicely padded u-maximal MS trees and m-maximal trees.
//!
//! A u-maximal tree runs over unsquashed MS models, which may stop being
//! genuine premice when a degree-0 ultrapower is taken in the special
//! configuration; the m-maximal side runs over the squashes. Transition
//! slots (padding on the u side) are where the m side plays the trivial
//! completion to grow past the squash; slots where the u side plays its own
//! top extender become padding on the m side. Models correspond up to
//! support isomorphism fixing the base premouse's tokens.

use std::collections::HashSet;

use rand::Rng;

use crate::arena::Token;
use crate::iso::{table_iso, SupportIso};
use crate::jconv::{base_names, prefix, ClauseRecord};
use crate::premouse::{Degree, ExtenderInfo, LevelTable, PremouseError};
use crate::tree::{IterationTree, Rules, TreeError, TreeNode};
use crate::ultrapower::{ult_by_sequence, Embedding, UltError};

#[derive(Debug, thiserror::Error)]
pub enum MsError {
    #[error("unsuitable input: {0}")]
    Unsuitable(String),
    #[error("slot {0} carries no exit extender")]
    NoExit(usize),
    #[error("conversion contract broke: {0}")]
    Contract(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Premouse(#[from] PremouseError),
    #[error(transparent)]
    Ult(#[from] UltError),
}

// Suitability bookkeeping: the degree over the squash is one below the
// degree over an unsquashed type-3 model, and equal otherwise.

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MsSuitCase {
    TypeLe2,
    Type3,
    InternalSegPm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MsSuitability {
    pub k: Degree,
    pub m: Degree,
    pub case: MsSuitCase,
}

/// The degree over the squashed side corresponding to degree `k` over a
/// model that is (`type3 == true`) or is not squash-nontrivial. Undefined
/// for degree 0 over a squash-nontrivial model.
pub fn m_of(type3: bool, k: Degree) -> Option<Degree> {
    match (type3, k) {
        (false, k) => Some(k),
        (true, Degree::Omega) => Some(Degree::Omega),
        (true, Degree::Fin(j)) if j >= 1 => Some(Degree::Fin(j - 1)),
        _ => None,
    }
}

/// Whether a standalone table needs squashing before the m-maximal rules
/// apply to it: an active top that is a trivial completion or whose nu is a
/// limit of generators.
pub fn table_is_type3(table: &LevelTable) -> bool {
    table
        .top_extender()
        .is_some_and(|f| f.flavor == crate::premouse::ExtFlavor::MsType3 || f.nu_is_limit_of_generators)
}

pub fn ms_suitability(table: &LevelTable, k: Degree) -> Result<MsSuitability, MsError> {
    if table.flavor != crate::premouse::Flavor::MS {
        return Err(MsError::Unsuitable("J-flavored table".into()));
    }
    if table_is_type3(table) {
        let m = m_of(true, k).ok_or_else(|| {
            MsError::Unsuitable("degree 0 over a type-3 table has no squashed counterpart".into())
        })?;
        Ok(MsSuitability { k, m, case: MsSuitCase::Type3 })
    } else {
        Ok(MsSuitability { k, m: k, case: MsSuitCase::TypeLe2 })
    }
}

/// The internal-segment form: degree 1 over the unsquashed model paired
/// with degree 0 over its squash.
pub fn ms_suitability_internal(table: &LevelTable, k: Degree) -> Result<MsSuitability, MsError> {
    if k != Degree::Fin(1) {
        return Err(MsError::Unsuitable("internal-segment case requires degree 1".into()));
    }
    if table.top_extender().is_none() {
        return Err(MsError::Unsuitable("passive table has no squash".into()));
    }
    Ok(MsSuitability { k, m: Degree::Fin(0), case: MsSuitCase::InternalSegPm })
}

// Per-node classification.

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MsKind {
    None,
    Special,
    Vs,
    PreSpecial,
    Vps,
    Transition,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MsSpecialInfo {
    pub alpha: usize,
    pub kind: MsKind,
    /// Least slot whose extender witnesses the model failing to be a premouse.
    pub witness: Option<usize>,
}

fn require_rules(tree: &IterationTree, want: Rules) -> Result<(), MsError> {
    if tree.rules != want {
        return Err(MsError::Unsuitable(format!(
            "{:?} rules; {want:?} required",
            tree.rules
        )));
    }
    Ok(())
}

/// Whether the model at `alpha` fails to be a genuine premouse: it was
/// produced (along its branch, without later drops) by an ultrapower in the
/// special configuration.
pub fn is_nonpremouse(tree: &IterationTree, alpha: usize) -> bool {
    tree.least_witness(alpha).is_some()
}

/// `M^±` of the node's model: the squash when the node is not a genuine
/// premouse, the model itself otherwise.
pub fn pm_of(tree: &IterationTree, alpha: usize) -> Result<LevelTable, MsError> {
    if is_nonpremouse(tree, alpha) {
        Ok(tree.nodes[alpha].model.squash(&tree.arena)?)
    } else {
        Ok(tree.nodes[alpha].model.clone())
    }
}

fn pm_last(tree: &IterationTree) -> Result<LevelTable, MsError> {
    pm_of(tree, tree.len() - 1)
}

/// Whether the node must unravel: a non-premouse at degree 0.
pub fn is_ms_special(tree: &IterationTree, alpha: usize) -> bool {
    is_nonpremouse(tree, alpha) && tree.nodes[alpha].degree == Degree::Fin(0)
}

fn ext_in(table: &LevelTable, e: &ExtenderInfo) -> bool {
    table.levels.iter().any(|l| l.active.as_ref() == Some(e))
}

fn iota_of(arena: &crate::arena::Arena, table: &LevelTable) -> Result<Token, MsError> {
    Ok(table.iota(arena)?)
}

/// Per-node kinds of a nicely padded u-maximal tree, with the padding and
/// exchange-ordinal discipline validated along the way.
pub fn classify_ms(tree: &IterationTree) -> Result<Vec<MsSpecialInfo>, MsError> {
    require_rules(tree, Rules::MsUMax)?;
    let mut out = Vec::new();
    for alpha in 0..tree.len() {
        let node = &tree.nodes[alpha];
        let witness = tree.least_witness(alpha);
        let nonpm = witness.is_some();
        let is_pad = node.exit.is_none() && alpha + 1 < tree.len();
        let kind = if is_pad {
            if !nonpm {
                return Err(MsError::Contract(format!(
                    "padding at slot {alpha} on a genuine premouse"
                )));
            }
            if node.degree == Degree::Fin(0) {
                return Err(MsError::Contract(format!(
                    "padding at slot {alpha} at degree 0"
                )));
            }
            let f = node.model.top_extender().expect("non-premouse is active");
            if node.tilde_nu != Some(f.nu) {
                return Err(MsError::Contract(format!(
                    "padding slot {alpha} does not use nu of the top as exchange ordinal"
                )));
            }
            let next = &tree.nodes[alpha + 1];
            let Some(e) = next.exit else {
                return Err(MsError::Contract(format!(
                    "padding slot {alpha} is not followed by a real extender"
                )));
            };
            if tree.nodes[alpha + 1].pred != Some(alpha) {
                return Err(MsError::Contract(format!(
                    "padding successor of slot {alpha} does not attach at it"
                )));
            }
            let pmt = pm_of(tree, alpha)?;
            if ext_in(&pmt, &e) {
                return Err(MsError::Contract(format!(
                    "padding slot {alpha} followed by an extender inside the squash"
                )));
            }
            MsKind::Transition
        } else {
            if let Some(e) = node.exit {
                let seg = node.model.segment(e.lh)?;
                let want = tree.arena.max(e.nu, seg.top().lgcd);
                if node.tilde_nu != Some(want) {
                    return Err(MsError::Contract(format!(
                        "slot {alpha} does not use iota of its exit as exchange ordinal"
                    )));
                }
            }
            let plays_top = node.exit.is_some() && node.model.top_extender() == node.exit.as_ref();
            match (nonpm, node.degree == Degree::Fin(0)) {
                (false, _) => MsKind::None,
                (true, true) => {
                    if node.exit.is_some() && !plays_top {
                        return Err(MsError::Contract(format!(
                            "degree-0 non-premouse at slot {alpha} plays a foreign extender"
                        )));
                    }
                    if plays_top { MsKind::Vs } else { MsKind::Special }
                }
                (true, false) => {
                    if plays_top {
                        MsKind::Vps
                    } else {
                        MsKind::PreSpecial
                    }
                }
            }
        };
        out.push(MsSpecialInfo { alpha, kind, witness });
    }
    Ok(out)
}

pub fn is_unravelled_ms(tree: &IterationTree) -> bool {
    !is_ms_special(tree, tree.len() - 1)
}

/// Minimal extension by top-extender steps until the final node is no
/// longer a degree-0 non-premouse. Critical points decrease strictly along
/// the appended steps.
pub fn unravel_ms(tree: &IterationTree) -> Result<IterationTree, MsError> {
    require_rules(tree, Rules::MsUMax)?;
    let mut s = tree.clone();
    let mut last_cr: Option<Token> = None;
    while is_ms_special(&s, s.len() - 1) {
        let f = *s
            .last_model()
            .top_extender()
            .expect("a special node's model is active");
        if let Some(c) = last_cr {
            if !s.arena.lt(f.cr, c) {
                return Err(MsError::Contract(
                    "critical points fail to decrease while unravelling".into(),
                ));
            }
        }
        last_cr = Some(f.cr);
        let tilde = iota_of(&s.arena, s.last_model())?;
        s.step(f, tilde)?;
        s.eta.push(s.len() - 1);
    }
    Ok(s)
}

/// Insert the forced transition padding into a plain u-maximal tree: a
/// padding slot goes in front of every slot whose non-premouse model (at
/// positive degree) plays an extender outside its squash. No ultrapowers
/// are recomputed; slots are spliced and predecessors recomputed, which is
/// sound exactly because a padding slot shares model and degree with its
/// successor.
pub fn pad_ms(tree: &IterationTree) -> Result<IterationTree, MsError> {
    require_rules(tree, Rules::MsUMax)?;
    if (0..tree.len() - 1).any(|g| tree.nodes[g].exit.is_none()) {
        return Err(MsError::Unsuitable("input already carries padding".into()));
    }
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut map: Vec<usize> = Vec::with_capacity(tree.len());
    for j in 0..tree.len() {
        let old = &tree.nodes[j];
        let needs_pad = match old.exit {
            Some(e) if is_nonpremouse(tree, j) && old.degree != Degree::Fin(0) => {
                !ext_in(&pm_of(tree, j)?, &e)
            }
            _ => false,
        };
        let arrival_idx = nodes.len();
        map.push(arrival_idx);
        let mut arrival = old.clone();
        // Recompute the arrival predecessor over the spliced slots.
        if j >= 1 {
            let e_prev = tree.nodes[j - 1].exit.expect("unpadded input");
            let new_pred = (0..arrival_idx)
                .find(|&d| {
                    nodes[d]
                        .tilde_nu
                        .is_some_and(|nu| tree.arena.lt(e_prev.cr, nu))
                })
                .ok_or_else(|| {
                    MsError::Contract(format!("no predecessor slot for node {j} after padding"))
                })?;
            let old_pred = old.pred.expect("non-root node has a predecessor");
            let anchor = map[old_pred];
            if nodes[new_pred].model != nodes[anchor].model
                || nodes[new_pred].degree != nodes[anchor].degree
            {
                return Err(MsError::Contract(format!(
                    "padding moves the predecessor of node {j} to a different model"
                )));
            }
            arrival.pred = Some(new_pred);
        }
        if needs_pad {
            let f = *old.model.top_extender().expect("non-premouse is active");
            arrival.exit = None;
            arrival.label = None;
            arrival.tilde_nu = Some(f.nu);
            nodes.push(arrival);
            nodes.push(TreeNode {
                model: old.model.clone(),
                degree: old.degree,
                exit: old.exit,
                label: None,
                tilde_nu: old.tilde_nu,
                pred: Some(arrival_idx),
                m_star: None,
                emb_star: Some(Embedding::identity()),
                dropped: false,
                dropped_deg: false,
            });
        } else {
            nodes.push(arrival);
        }
    }
    Ok(IterationTree {
        arena: tree.arena.clone(),
        rules: Rules::MsUMax,
        nodes,
        eta: tree.eta.iter().map(|&s| map[s]).collect(),
    })
}

/// Remove the padding slots of a padded MS tree (either rule set), merging
/// each padding slot's successor into its source node and remapping
/// predecessors.
pub fn unpad_ms(u: &IterationTree) -> Result<IterationTree, MsError> {
    if u.rules != Rules::MsUMax && u.rules != Rules::MsMMax {
        return Err(MsError::Unsuitable(format!("{:?} rules", u.rules)));
    }
    let mut nodes = Vec::new();
    let mut map: Vec<usize> = Vec::with_capacity(u.len());
    for gamma in 0..u.len() {
        if gamma == 0 || u.nodes[gamma - 1].exit.is_some() {
            map.push(nodes.len());
            nodes.push(u.nodes[gamma].clone());
        } else {
            let tgt = map[gamma - 1];
            map.push(tgt);
            if u.nodes[gamma].model != nodes[tgt].model {
                return Err(MsError::Contract(format!(
                    "padding successor {gamma} changed the model"
                )));
            }
            nodes[tgt].exit = u.nodes[gamma].exit;
            nodes[tgt].label = u.nodes[gamma].label;
            nodes[tgt].tilde_nu = u.nodes[gamma].tilde_nu;
        }
    }
    for n in nodes.iter_mut() {
        if let Some(p) = n.pred {
            n.pred = Some(map[p]);
        }
    }
    let mut eta: Vec<usize> = Vec::new();
    for &s in &u.eta {
        let m = map[s];
        if eta.last() != Some(&m) {
            eta.push(m);
        }
    }
    Ok(IterationTree {
        arena: u.arena.clone(),
        rules: u.rules,
        nodes,
        eta,
    })
}

/// The auxiliary tree whose last model's squash corresponds to the
/// m-maximal side's model at slot `alpha`: the unravelled prefix, with the
/// node's own top played first when the preceding slot was padding.
fn u_state(t: &IterationTree, alpha: usize) -> Result<IterationTree, MsError> {
    let after_pad = alpha >= 1 && t.nodes[alpha - 1].exit.is_none();
    let mut w = prefix(t, alpha + 1);
    if after_pad {
        let f = *w
            .last_model()
            .top_extender()
            .ok_or_else(|| MsError::Contract(format!("passive model after padding slot {}", alpha - 1)))?;
        let tilde = iota_of(&w.arena, w.last_model())?;
        w.step(f, tilde)?;
        w.eta.push(w.len() - 1);
    }
    unravel_ms(&w)
}

/// Checks that every prefix unravels, and that playing the top extender
/// right after any padding slot yields an unravelable tree.
pub fn everywhere_unravelable_ms_report(tree: &IterationTree) -> Result<(), String> {
    if let Err(e) = require_rules(tree, Rules::MsUMax) {
        return Err(e.to_string());
    }
    for beta in 1..=tree.len() {
        unravel_ms(&prefix(tree, beta))
            .map_err(|e| format!("prefix of length {beta} does not unravel: {e}"))?;
    }
    for alpha in 0..tree.len() - 1 {
        if tree.nodes[alpha].exit.is_some() {
            continue;
        }
        u_state(tree, alpha + 1)
            .map_err(|e| format!("the top play after padding slot {alpha} does not unravel: {e}"))?;
    }
    Ok(())
}

pub fn is_everywhere_unravelable_ms(tree: &IterationTree) -> bool {
    everywhere_unravelable_ms_report(tree).is_ok()
}

fn map_ext(iso: &SupportIso, e: &ExtenderInfo, what: &str) -> Result<ExtenderInfo, MsError> {
    let get = |t: Token| {
        iso.get(t)
            .ok_or_else(|| MsError::Contract(format!("{what}: token outside the support pairing")))
    };
    Ok(ExtenderInfo {
        cr: get(e.cr)?,
        nu: get(e.nu)?,
        lambda: get(e.lambda)?,
        lh: get(e.lh)?,
        flavor: e.flavor,
        nu_is_limit_of_generators: e.nu_is_limit_of_generators,
    })
}

/// Convert a nicely padded u-maximal tree into the corresponding m-maximal
/// tree on the same base: padding slots become trivial-completion steps,
/// slots playing the model's own top become padding, and every other slot's
/// extender is carried over through the slot's support isomorphism.
pub fn convert_ms(t: &IterationTree) -> Result<IterationTree, MsError> {
    require_rules(t, Rules::MsUMax)?;
    if !is_unravelled_ms(t) {
        return Err(MsError::Unsuitable(
            "the final node must unravel before converting".into(),
        ));
    }
    everywhere_unravelable_ms_report(t).map_err(MsError::Unsuitable)?;
    let infos = classify_ms(t)?;
    let base = base_names(t);
    let mut u = IterationTree::new(t.arena.clone(), t.nodes[0].model.clone(), Rules::MsMMax)?;
    for alpha in 0..t.len() - 1 {
        match infos[alpha].kind {
            MsKind::Transition => {
                let f = *u
                    .last_model()
                    .top_extender()
                    .ok_or_else(|| MsError::Contract(format!("no trivial completion to play at slot {alpha}")))?;
                let tilde = iota_of(&u.arena, u.last_model())?;
                u.step(f, tilde)?;
            }
            MsKind::Vs | MsKind::Vps => {
                let r = u_state(t, alpha)?;
                let pmr = pm_last(&r)?;
                let iso = table_iso(&r.arena, &pmr, &u.arena, u.last_model(), &base)
                    .ok_or_else(|| {
                        MsError::Contract(format!("no support isomorphism at slot {alpha}"))
                    })?;
                let tilde_t = t.nodes[alpha]
                    .tilde_nu
                    .ok_or(MsError::NoExit(alpha))?;
                let f = t.nodes[alpha].model.top_extender().expect("plays its top");
                let tilde_u = iso
                    .get(tilde_t)
                    .or_else(|| iso.get(f.nu))
                    .ok_or_else(|| {
                        MsError::Contract(format!("exchange ordinal of slot {alpha} has no image"))
                    })?;
                u.pad(None, Some(tilde_u));
            }
            _ => {
                let e = t.nodes[alpha].exit.ok_or(MsError::NoExit(alpha))?;
                let r = u_state(t, alpha)?;
                let pmr = pm_last(&r)?;
                let iso = table_iso(&r.arena, &pmr, &u.arena, u.last_model(), &base)
                    .ok_or_else(|| {
                        MsError::Contract(format!("no support isomorphism at slot {alpha}"))
                    })?;
                let e_u = map_ext(&iso, &e, &format!("extender of slot {alpha}"))?;
                let seg = u.last_model().segment(e_u.lh).map_err(|err| {
                    MsError::Contract(format!("slot {alpha}: carried extender off the sequence: {err}"))
                })?;
                let tilde = u.arena.max(e_u.nu, seg.top().lgcd);
                u.step(e_u, tilde)?;
            }
        }
    }
    u.eta = t.eta.clone();
    if u.len() != t.len() {
        return Err(MsError::Contract(format!(
            "converted length {} differs from input length {}",
            u.len(),
            t.len()
        )));
    }
    Ok(u)
}

/// Definedness of the degree/segment recursion for the branch extender
/// sequences of every node, over the base at u-degree `k`.
pub fn u_wellfounded(u: &IterationTree, k: Degree) -> bool {
    let m0 = &u.nodes[0].model;
    for alpha in 0..u.len() {
        let mut seq = Vec::new();
        for &x in &u.branch(alpha) {
            if x == 0 {
                continue;
            }
            if let Some(e) = u.nodes[x - 1].exit {
                let Ok(ctx) = u.nodes[x - 1].model.segment(e.lh) else {
                    return false;
                };
                seq.push((e, ctx));
            }
        }
        let mut a = u.arena.clone();
        if ult_by_sequence(&mut a, m0, k, &seq).is_err() {
            return false;
        }
    }
    true
}

/// Reconstruct the unique nicely padded u-maximal tree whose conversion
/// unpads to the given m-maximal tree. A slot playing its own top over a
/// squash-topped state is a transition: the u side pads, and the next slot
/// decides (by whether its pullback already lives in the padded model)
/// whether the transition was followed by a copy or by the padded node
/// playing its own top. Returns the tree together with its conversion.
pub fn invert_ms(u_prime: &IterationTree) -> Result<(IterationTree, IterationTree), MsError> {
    require_rules(u_prime, Rules::MsMMax)?;
    if (0..u_prime.len() - 1).any(|g| u_prime.nodes[g].exit.is_none()) {
        return Err(MsError::Unsuitable("padded input; unpad first".into()));
    }
    if !u_wellfounded(u_prime, u_prime.nodes[0].degree) {
        return Err(MsError::Unsuitable(
            "the branch extender sequences do not all apply to the base".into(),
        ));
    }
    let base = base_names(u_prime);
    let mut t = IterationTree::new(
        u_prime.arena.clone(),
        u_prime.nodes[0].model.clone(),
        Rules::MsUMax,
    )?;
    let mut pending = false;
    for gamma in 0..u_prime.len() - 1 {
        let e_u = u_prime.nodes[gamma].exit.expect("unpadded input");
        let m_u = &u_prime.nodes[gamma].model;
        loop {
            let w = if pending {
                let mut w = t.clone();
                let f = *w
                    .last_model()
                    .top_extender()
                    .ok_or_else(|| MsError::Contract(format!("passive model behind pending slot {gamma}")))?;
                let tilde = iota_of(&w.arena, w.last_model())?;
                w.step(f, tilde)?;
                w.eta.push(w.len() - 1);
                unravel_ms(&w)?
            } else {
                t.clone()
            };
            let pmw = pm_last(&w)?;
            let iso = table_iso(&u_prime.arena, m_u, &w.arena, &pmw, &base).ok_or_else(|| {
                MsError::Contract(format!("no support isomorphism back at slot {gamma}"))
            })?;
            let state_nonpm = is_nonpremouse(&w, w.len() - 1);
            if state_nonpm && m_u.top_extender() == Some(&e_u) {
                // Playing the trivial completion: a transition on the u side.
                if pending {
                    t = w;
                }
                let f = *t.last_model().top_extender().expect("non-premouse is active");
                t.pad(None, Some(f.nu));
                pending = true;
                break;
            }
            let e_t = map_ext(&iso, &e_u, &format!("extender of slot {gamma}"))?;
            if pending {
                let last = t.last_model();
                let in_t = last.levels[..last.levels.len() - 1]
                    .iter()
                    .any(|l| l.active.as_ref() == Some(&e_t));
                if in_t {
                    let seg = t.last_model().segment(e_t.lh)?;
                    let tilde = t.arena.max(e_t.nu, seg.top().lgcd);
                    t.step(e_t, tilde)?;
                    t.eta.push(t.len() - 1);
                    t = unravel_ms(&t)?;
                    pending = false;
                    break;
                }
                // The padded node really played its own top; commit the
                // state and resolve the slot against it.
                t = w;
                pending = false;
                continue;
            }
            let seg = t.last_model().segment(e_t.lh).map_err(|err| {
                MsError::Contract(format!("slot {gamma}: pullback off the sequence: {err}"))
            })?;
            let tilde = t.arena.max(e_t.nu, seg.top().lgcd);
            t.step(e_t, tilde)?;
            t.eta.push(t.len() - 1);
            t = unravel_ms(&t)?;
            break;
        }
    }
    if pending {
        // The final slot played a trivial completion whose following top
        // play carried no further extender.
        let f = *t
            .last_model()
            .top_extender()
            .ok_or_else(|| MsError::Contract("passive model behind a trailing pending slot".into()))?;
        let tilde = iota_of(&t.arena, t.last_model())?;
        t.step(f, tilde)?;
        t.eta.push(t.len() - 1);
        t = unravel_ms(&t)?;
    }
    let v = convert_ms(&t)?;
    Ok((t, v))
}

// Contract checking.

#[derive(Debug, Clone, serde::Serialize, Default)]
pub struct MsReport {
    pub records: Vec<ClauseRecord>,
}

impl MsReport {
    pub fn all_ok(&self) -> bool {
        self.records.iter().all(|r| r.ok)
    }

    fn push(&mut self, clause: &str, ok: bool, detail: String) {
        self.records.push(ClauseRecord {
            clause: clause.to_string(),
            ok,
            detail,
        });
    }
}

fn branch_map(t: &IterationTree, alpha: usize) -> Option<Embedding> {
    let mut acc: Option<Embedding> = None;
    for &x in &t.branch(alpha) {
        if x == 0 {
            continue;
        }
        let step = t.nodes[x].emb_star.clone()?;
        acc = Some(match acc {
            None => step,
            Some(prev) => prev.compose(&t.arena, &step)?,
        });
    }
    acc
}

fn branch_drops(t: &IterationTree, alpha: usize) -> Vec<usize> {
    t.branch(alpha)
        .into_iter()
        .filter(|&x| t.nodes[x].dropped)
        .collect()
}

/// Verify the correspondence between a nicely padded u-maximal tree and its
/// m-maximal conversion, one record per clause.
pub fn check_ms_contract(t: &IterationTree, u: &IterationTree) -> MsReport {
    let mut rep = MsReport::default();
    let base = base_names(t);
    let last = t.len() - 1;

    let infos = match classify_ms(t) {
        Ok(i) => i,
        Err(e) => {
            rep.push("shape", false, e.to_string());
            return rep;
        }
    };

    // Shape: equal length; padding trades places exactly as prescribed.
    let mut shape_ok = t.len() == u.len();
    let mut shape_bad = Vec::new();
    if shape_ok {
        for alpha in 0..t.len() - 1 {
            let u_real = u.nodes[alpha].exit.is_some();
            let want_real = !matches!(infos[alpha].kind, MsKind::Vs | MsKind::Vps);
            if u_real != want_real {
                shape_bad.push(alpha);
            }
        }
        shape_ok = shape_bad.is_empty();
    }
    rep.push(
        "shape",
        shape_ok,
        if shape_ok {
            format!("lengths {} and {}", t.len(), u.len())
        } else {
            format!("padding mismatch at slots {shape_bad:?}")
        },
    );
    if !shape_ok {
        return rep;
    }

    // (a) Final models: the m side reaches the squash of the u side's end.
    let final_iso = match pm_of(t, last) {
        Ok(pmt) => table_iso(&t.arena, &pmt, &u.arena, &u.nodes[last].model, &base),
        Err(_) => None,
    };
    rep.push(
        "a:final_model",
        final_iso.is_some(),
        "support isomorphism between the final squash and the final model".into(),
    );

    // (b) The main branches drop together.
    let td = branch_drops(t, last);
    let ud = branch_drops(u, last);
    rep.push(
        "b:drops",
        td.is_empty() == ud.is_empty(),
        format!("drops at {td:?} vs {ud:?}"),
    );

    // (deg) Degree bookkeeping: at every node the m-side degree is the
    // u-side degree, shifted down by one over non-premouse models.
    {
        let mut bad = Vec::new();
        let mut checked = 0usize;
        for alpha in 0..t.len() {
            let type3 = is_nonpremouse(t, alpha);
            match m_of(type3, t.nodes[alpha].degree) {
                Some(want) => {
                    checked += 1;
                    if u.nodes[alpha].degree != want {
                        bad.push(format!(
                            "node {alpha}: {:?} vs expected {want:?}",
                            u.nodes[alpha].degree
                        ));
                    }
                }
                None => {}
            }
        }
        rep.push(
            "deg:shift",
            bad.is_empty(),
            if bad.is_empty() {
                format!("{checked} nodes")
            } else {
                bad.join("; ")
            },
        );
    }

    // (nu) Exchange-ordinal discipline on the m side: every real slot uses
    // iota of its exit segment.
    {
        let mut bad = Vec::new();
        for alpha in 0..u.len() - 1 {
            let Some(e) = u.nodes[alpha].exit else { continue };
            match u.nodes[alpha].model.segment(e.lh) {
                Ok(seg) => {
                    let want = u.arena.max(e.nu, seg.top().lgcd);
                    if u.nodes[alpha].tilde_nu != Some(want) {
                        bad.push(format!("slot {alpha}"));
                    }
                }
                Err(err) => bad.push(format!("slot {alpha}: {err}")),
            }
        }
        rep.push(
            "nu:iota",
            bad.is_empty(),
            if bad.is_empty() {
                "iota recomputed on every real slot".into()
            } else {
                bad.join("; ")
            },
        );
    }

    // (tr) Transitions: the u side keeps its model while the m side plays
    // the trivial completion of the squash it had reached and strictly
    // grows past it.
    {
        let mut bad = Vec::new();
        let mut count = 0usize;
        for alpha in 0..t.len() - 1 {
            if infos[alpha].kind != MsKind::Transition {
                continue;
            }
            count += 1;
            if t.nodes[alpha + 1].model != t.nodes[alpha].model {
                bad.push(format!("slot {alpha}: u side moved"));
            }
            match pm_of(t, alpha) {
                Ok(pmt) => {
                    if table_iso(&t.arena, &pmt, &u.arena, &u.nodes[alpha].model, &base).is_none() {
                        bad.push(format!("slot {alpha}: squash correspondence broken"));
                    }
                }
                Err(e) => bad.push(format!("slot {alpha}: {e}")),
            }
            let grew = u
                .arena
                .lt(u.nodes[alpha].model.height(), u.nodes[alpha + 1].model.height());
            if !grew {
                bad.push(format!("slot {alpha}: m side did not grow"));
            }
        }
        rep.push(
            "tr:growth",
            bad.is_empty(),
            if bad.is_empty() {
                format!("{count} transitions")
            } else {
                bad.join("; ")
            },
        );
    }

    // (h) The composed main-branch maps agree on the shared base through
    // the final isomorphism.
    let ok = match (&final_iso, branch_map(t, last), branch_map(u, last)) {
        (Some(iso), Some(it), Some(iu)) => {
            let mut checked = 0usize;
            let mut good = true;
            for (&x, &y) in &it.map {
                if let Some(&y2) = iu.map.get(&x) {
                    checked += 1;
                    if iso.get(y) != Some(y2) {
                        good = false;
                    }
                }
            }
            good && checked > 0
        }
        _ => false,
    };
    rep.push(
        "h:final_maps",
        ok,
        "pointwise agreement through the final isomorphism".into(),
    );

    rep
}

/// Convert a finite stack of u-maximal rounds, each starting at the final
/// model (and degree) of the previous one; the boundary models must be
/// genuine premice.
pub fn convert_stack(rounds: &[IterationTree]) -> Result<Vec<IterationTree>, MsError> {
    let mut out = Vec::new();
    for (i, t) in rounds.iter().enumerate() {
        if i > 0 {
            let prev = &rounds[i - 1];
            let end = prev.nodes.last().unwrap();
            if is_nonpremouse(prev, prev.len() - 1) {
                return Err(MsError::Unsuitable(format!(
                    "round {} ends in a non-premouse boundary model",
                    i - 1
                )));
            }
            if t.nodes[0].model.levels != end.model.levels
                || t.nodes[0].model.flavor != end.model.flavor
                || t.nodes[0].degree != end.degree
            {
                return Err(MsError::Unsuitable(format!(
                    "round {i} does not start at the previous round's final model and degree"
                )));
            }
        }
        let u = convert_ms(t)?;
        let pmt = pm_of(t, t.len() - 1)?;
        let base = base_names(t);
        if table_iso(&t.arena, &pmt, &u.arena, u.last_model(), &base).is_none() {
            return Err(MsError::Contract(format!(
                "round {i}: final models do not correspond"
            )));
        }
        out.push(u);
    }
    Ok(out)
}

/// Seeded random plain u-maximal tree: degree-0 non-premouse nodes play
/// their own top (forced unravelling); elsewhere a legal extender is
/// picked, biased toward moves that produce a non-premouse successor.
pub fn random_ms_tree<R: Rng>(
    arena: crate::arena::Arena,
    base: LevelTable,
    rng: &mut R,
    budget: usize,
) -> Result<IterationTree, TreeError> {
    let mut tree = IterationTree::new(arena, base, Rules::MsUMax)?;
    for _ in 0..budget {
        if is_ms_special(&tree, tree.len() - 1) {
            let f = *tree.last_model().top_extender().expect("active");
            let Ok(tilde) = tree.last_model().iota(&tree.arena) else { break };
            if tree.step(f, tilde).is_err() {
                break;
            }
            tree.eta.push(tree.len() - 1);
            continue;
        }
        let mut cands = tree.legal_exits();
        if cands.is_empty() {
            break;
        }
        cands.sort_by_key(|e| tree.arena.rank(e.lh));
        let pick = if rng.gen_bool(0.7) {
            // Prefer moves whose successor fails to be a premouse.
            let special: Vec<usize> = cands
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    let mut probe = tree.clone();
                    probe.apply_plain(**e).is_ok() && is_nonpremouse(&probe, probe.len() - 1)
                })
                .map(|(i, _)| i)
                .collect();
            if special.is_empty() {
                rng.gen_range(0..cands.len())
            } else {
                special[rng.gen_range(0..special.len())]
            }
        } else {
            rng.gen_range(0..cands.len())
        };
        if tree.apply_plain(cands[pick]).is_err() {
            break;
        }
    }
    Ok(tree)
}

/// Names of the base support tokens, re-exported for MS callers.
pub fn ms_base_names(tree: &IterationTree) -> HashSet<String> {
    base_names(tree)
}
