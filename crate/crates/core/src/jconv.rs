//! Conversion between nicely padded J-trees and (padded) lifting-MS trees.
//!
//! A J-tree exchanges at lambda, a lifting tree at nu; the conversion
//! replaces each J-block by its dropdown played for real, turns very
//! special blocks into padding, and is inverted by replaying the lifting
//! blocks as J-blocks and unravelling after each one. Models on the two
//! sides are equal up to support isomorphism fixing the base premouse's
//! tokens; the contract checker verifies the full clause list of that
//! correspondence.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::arena::Token;
use crate::iso::{table_iso, SupportIso};
use crate::premouse::{ExtenderInfo, LevelTable, PremouseError};
use crate::tree::{IterationTree, Rules, TreeError};
use crate::ultrapower::{extenders_equivalent_over, Embedding, UltError};

#[derive(Debug, thiserror::Error)]
pub enum JconvError {
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SpecialKind {
    None,
    Special,
    VerySpecial,
}

/// Per-node special classification.
#[derive(Debug, Clone)]
pub struct SpecialInfo {
    pub alpha: usize,
    pub kind: SpecialKind,
    /// Least slot whose extender witnesses specialness.
    pub witness: Option<usize>,
    /// Core extender of the node's top extender.
    pub core: Option<ExtenderInfo>,
}

fn require_j(tree: &IterationTree) -> Result<(), JconvError> {
    if tree.rules != Rules::JMax {
        return Err(JconvError::Unsuitable(format!(
            "{:?} rules; a nicely padded lambda-exchange tree is required",
            tree.rules
        )));
    }
    Ok(())
}

/// Names of the base premouse's support tokens: the region a support
/// isomorphism between the two sides must fix.
pub fn base_names(tree: &IterationTree) -> HashSet<String> {
    tree.nodes[0]
        .model
        .support(&tree.arena)
        .into_iter()
        .map(|t| tree.arena.name(t).to_string())
        .collect()
}

pub fn classify_special(tree: &IterationTree) -> Result<Vec<SpecialInfo>, JconvError> {
    require_j(tree)?;
    Ok((0..tree.len())
        .map(|alpha| {
            let witness = tree.least_witness(alpha);
            let kind = if witness.is_none() {
                SpecialKind::None
            } else if tree.is_very_special(alpha) {
                SpecialKind::VerySpecial
            } else {
                SpecialKind::Special
            };
            SpecialInfo {
                alpha,
                kind,
                witness,
                core: tree.core_of(alpha),
            }
        })
        .collect())
}

/// The companion slot of the extender at `alpha`: for a very special slot,
/// one below the predecessor of the witness's successor; otherwise the last
/// padding slot of `alpha`'s block.
pub fn tilde(tree: &IterationTree, alpha: usize) -> Result<usize, JconvError> {
    require_j(tree)?;
    if tree.nodes[alpha].exit.is_none() {
        return Err(JconvError::NoExit(alpha));
    }
    if tree.is_very_special(alpha) {
        let beta = tree.least_witness(alpha).expect("very special is special");
        let p = tree.nodes[beta + 1].pred.expect("witness successor has a predecessor");
        if p == 0 {
            return Err(JconvError::Contract(format!(
                "witness successor of slot {alpha} attaches at the root; \
                 the tree is not nicely padded"
            )));
        }
        Ok(p - 1)
    } else {
        if alpha == 0 {
            return Err(JconvError::Contract(
                "slot 0 of a nicely padded tree cannot carry a real extender".into(),
            ));
        }
        Ok(alpha - 1)
    }
}

/// The core extender of the extender at `alpha`: itself unless the slot is
/// very special, in which case the top of the segment the witness extender
/// was applied to.
pub fn core_ext(tree: &IterationTree, alpha: usize) -> Result<ExtenderInfo, JconvError> {
    let e = tree.nodes[alpha].exit.ok_or(JconvError::NoExit(alpha))?;
    if tree.is_very_special(alpha) {
        tree.core_of(alpha)
            .ok_or_else(|| JconvError::Contract(format!("no core at very special slot {alpha}")))
    } else {
        Ok(e)
    }
}

/// The decomposition order on real slots.
#[derive(Debug, Clone, Default)]
pub struct ExtOrder {
    /// One-step pairs (gamma, alpha) with gamma below alpha.
    pub direct: Vec<(usize, usize)>,
    /// Transitive closure of `direct` (contains the diagonal).
    pub closure: BTreeSet<(usize, usize)>,
}

impl ExtOrder {
    /// Slots at or below `alpha` in the decomposition order.
    pub fn support(&self, alpha: usize) -> Vec<usize> {
        self.closure
            .iter()
            .filter(|&&(_, a)| a == alpha)
            .map(|&(g, _)| g)
            .collect()
    }
}

pub fn ext_order(tree: &IterationTree) -> Result<ExtOrder, JconvError> {
    require_j(tree)?;
    let real: Vec<usize> = (0..tree.len())
        .filter(|&g| tree.nodes[g].exit.is_some())
        .collect();
    let mut direct = Vec::new();
    for &alpha in &real {
        direct.push((alpha, alpha));
        if !tree.is_very_special(alpha) {
            continue;
        }
        let at = tilde(tree, alpha)?;
        let branch = tree.branch(alpha);
        let Some(pos) = branch.iter().position(|&z| z == at + 1) else {
            return Err(JconvError::Contract(format!(
                "companion successor {} of very special slot {alpha} is off its branch",
                at + 1
            )));
        };
        for &zeta in &branch[pos + 1..] {
            let gamma = zeta - 1;
            if tree.nodes[gamma].exit.is_some() {
                direct.push((gamma, alpha));
            }
        }
    }
    let mut closure: BTreeSet<(usize, usize)> = direct.iter().copied().collect();
    loop {
        let mut grew = false;
        let snapshot: Vec<(usize, usize)> = closure.iter().copied().collect();
        for &(a, b) in &snapshot {
            for &(c, d) in &snapshot {
                if b == c && closure.insert((a, d)) {
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    Ok(ExtOrder { direct, closure })
}

/// The standard decomposition of the extender at `alpha`: core extenders of
/// its decomposition-order support, by increasing critical point. The
/// well-definedness facts (distinct critical points, minimality at `alpha`
/// itself, nu interleaving) are verified and reported as contract errors.
pub fn standard_decomposition(
    tree: &IterationTree,
    alpha: usize,
) -> Result<Vec<ExtenderInfo>, JconvError> {
    let order = ext_order(tree)?;
    let a = &tree.arena;
    let mut entries: Vec<(usize, ExtenderInfo)> = order
        .support(alpha)
        .into_iter()
        .map(|b| core_ext(tree, b).map(|c| (b, c)))
        .collect::<Result<_, _>>()?;
    entries.sort_by_key(|(_, c)| a.rank(c.cr));
    for w in entries.windows(2) {
        if w[0].1.cr == w[1].1.cr {
            return Err(JconvError::Contract(format!(
                "slots {} and {} share the critical point {}",
                w[0].0,
                w[1].0,
                a.name(w[0].1.cr)
            )));
        }
        if !a.le(w[0].1.nu, w[1].1.cr) {
            return Err(JconvError::Contract(format!(
                "nu of the slot-{} core overshoots the next critical point",
                w[0].0
            )));
        }
    }
    if !entries.is_empty() && entries[0].0 != alpha {
        return Err(JconvError::Contract(format!(
            "slot {alpha} does not carry the least critical point of its own decomposition"
        )));
    }
    Ok(entries.into_iter().map(|(_, c)| c).collect())
}

/// Whether the one-extender iteration at `alpha` and its standard
/// decomposition produce the same model, applied to the segment the tree
/// actually used at `alpha + 1`.
pub fn decomposition_equivalent(
    tree: &IterationTree,
    alpha: usize,
    base: &HashSet<String>,
) -> Result<bool, JconvError> {
    let e = tree.nodes[alpha].exit.ok_or(JconvError::NoExit(alpha))?;
    let decomp = standard_decomposition(tree, alpha)?;
    let lhs = vec![(e, tree.nodes[alpha].model.segment(e.lh)?)];
    let mut rhs = Vec::new();
    for c in decomp {
        let ctx = context_of(tree, &c)?;
        rhs.push((c, ctx));
    }
    let node = &tree.nodes[alpha + 1];
    let testbed = node
        .m_star
        .as_ref()
        .ok_or_else(|| JconvError::Contract(format!("no applied segment at slot {}", alpha + 1)))?;
    Ok(extenders_equivalent_over(
        &tree.arena,
        &lhs,
        &rhs,
        (testbed, node.degree),
        base,
    )?)
}

/// The table a core extender was cut from: the exit segment of the slot that
/// played it, or the applied segment of the witness for a very special core.
fn context_of(tree: &IterationTree, c: &ExtenderInfo) -> Result<LevelTable, JconvError> {
    for node in &tree.nodes {
        if node.exit.as_ref() == Some(c) {
            return Ok(node.model.segment(c.lh)?);
        }
        if let Some(ms) = &node.m_star {
            if ms.top_extender() == Some(c) {
                return Ok(ms.clone());
            }
        }
    }
    Err(JconvError::Contract(
        "core extender without a context in the tree".into(),
    ))
}

/// The length-`len` initial segment, with the slot data of its final node
/// cleared (that slot has not been played yet).
pub fn prefix(tree: &IterationTree, len: usize) -> IterationTree {
    assert!(1 <= len && len <= tree.len());
    let mut nodes = tree.nodes[..len].to_vec();
    let last = nodes.last_mut().expect("nonempty prefix");
    last.exit = None;
    last.label = None;
    last.tilde_nu = None;
    IterationTree {
        arena: tree.arena.clone(),
        rules: tree.rules,
        nodes,
        eta: tree.eta.iter().copied().filter(|&s| s < len).collect(),
    }
}

pub fn is_unravelled(tree: &IterationTree) -> bool {
    !tree.is_special(tree.len() - 1)
}

/// Minimal extension by top-extender steps until the final node is no
/// longer special. Critical points decrease strictly along the appended
/// steps, so the extension is short.
pub fn unravel(tree: &IterationTree) -> Result<IterationTree, JconvError> {
    require_j(tree)?;
    let mut s = tree.clone();
    let mut last_cr: Option<Token> = None;
    while s.is_special(s.len() - 1) {
        let f = *s
            .last_model()
            .top_extender()
            .expect("a special node's model is active");
        if let Some(c) = last_cr {
            if !s.arena.lt(f.cr, c) {
                return Err(JconvError::Contract(
                    "critical points fail to decrease while unravelling".into(),
                ));
            }
        }
        last_cr = Some(f.cr);
        s.apply_j_block(f)?;
    }
    Ok(s)
}

/// Checks that every block prefix unravels, and that playing any padding
/// label for real right after its slot also yields an unravelable tree.
pub fn everywhere_unravelable_report(tree: &IterationTree) -> Result<(), String> {
    if let Err(e) = require_j(tree) {
        return Err(e.to_string());
    }
    for &start in &tree.eta {
        unravel(&prefix(tree, start + 1))
            .map_err(|e| format!("prefix through slot {start} does not unravel: {e}"))?;
    }
    for (start, end) in tree.blocks() {
        if tree.nodes[end].exit.is_none() {
            continue;
        }
        for i in 0..end - start {
            let g = tree.nodes[start + i].label.ok_or_else(|| {
                format!("slot {} of a padded block carries no label", start + i)
            })?;
            let mut w = prefix(tree, start + i + 2);
            let lam = g.lambda;
            w.step(g, lam)
                .map_err(|e| format!("label of slot {} cannot be played for real: {e}", start + i))?;
            w.eta.push(w.len() - 1);
            unravel(&w)
                .map_err(|e| format!("tree through the slot-{} label does not unravel: {e}", start + i))?;
        }
    }
    Ok(())
}

pub fn is_everywhere_unravelable(tree: &IterationTree) -> bool {
    everywhere_unravelable_report(tree).is_ok()
}

fn map_ext(iso: &SupportIso, e: &ExtenderInfo, what: &str) -> Result<ExtenderInfo, JconvError> {
    let get = |t: Token| {
        iso.get(t)
            .ok_or_else(|| JconvError::Contract(format!("{what}: token outside the support pairing")))
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

/// Convert a nicely padded lambda-exchange tree into the corresponding
/// padded nu-exchange (lifting) tree on the same base: block by block, the
/// chosen extender is carried over through a support isomorphism and its
/// dropdown played for real, with a trailing padding slot; very special
/// blocks become pure padding. Exchange ordinals agree slot by slot.
pub fn convert(tree: &IterationTree) -> Result<IterationTree, JconvError> {
    require_j(tree)?;
    if !is_unravelled(tree) {
        return Err(JconvError::Unsuitable(
            "the final node is special; unravel before converting".into(),
        ));
    }
    everywhere_unravelable_report(tree).map_err(JconvError::Unsuitable)?;
    let base = base_names(tree);
    let mut u = IterationTree::new(
        tree.arena.clone(),
        tree.nodes[0].model.clone(),
        Rules::LiftingMsMax,
    )?;
    for (start, end) in tree.blocks() {
        let Some(e) = tree.nodes[end].exit else { continue };
        if end == start {
            // A one-slot block plays the model's own top extender: padding
            // on the lifting side, keeping the lambda exchange ordinal.
            if !tree.is_very_special(start) {
                return Err(JconvError::Contract(format!(
                    "one-slot block at {start} without a very special start"
                )));
            }
            u.pad(None, tree.nodes[end].tilde_nu);
            continue;
        }
        // The lifting-side model corresponds to the last model of the
        // unravelled prefix, in which the chosen extender survives intact.
        let r = unravel(&prefix(tree, start + 1))?;
        let iso = table_iso(&r.arena, r.last_model(), &u.arena, u.last_model(), &base)
            .ok_or_else(|| {
                JconvError::Contract(format!("no support isomorphism at block start {start}"))
            })?;
        let e_u = map_ext(&iso, &e, &format!("chosen extender of block {start}"))?;
        let dd = u.last_model().rev_e_dropdown(&u.arena, &e_u)?;
        if dd.len() != end - start {
            return Err(JconvError::Contract(format!(
                "dropdown length {} at block start {start} does not match the {} labels",
                dd.len(),
                end - start
            )));
        }
        for (_, f) in dd {
            let nu = f.nu;
            u.step(f, nu)?;
        }
        u.pad(None, Some(e_u.lambda));
    }
    u.eta = tree.eta.clone();
    if u.len() != tree.len() {
        return Err(JconvError::Contract(format!(
            "converted length {} differs from input length {}",
            u.len(),
            tree.len()
        )));
    }
    Ok(u)
}

/// Remove the padding slots of a padded lifting tree, merging each padded
/// slot's successor (a verbatim model copy) into its source node and
/// remapping predecessors.
pub fn unpad(u: &IterationTree) -> Result<IterationTree, JconvError> {
    if u.rules != Rules::LiftingMsMax {
        return Err(JconvError::Unsuitable(format!("{:?} rules", u.rules)));
    }
    let mut nodes = Vec::new();
    let mut map: Vec<usize> = Vec::with_capacity(u.len());
    for gamma in 0..u.len() {
        if gamma == 0 || u.nodes[gamma - 1].exit.is_some() {
            map.push(nodes.len());
            nodes.push(u.nodes[gamma].clone());
        } else {
            // Created by padding: same model as the previous node; only its
            // slot data (set when the slot was later played) moves over.
            let tgt = map[gamma - 1];
            map.push(tgt);
            if u.nodes[gamma].model != nodes[tgt].model {
                return Err(JconvError::Contract(format!(
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
        rules: Rules::LiftingMsMax,
        nodes,
        eta,
    })
}

/// One checked clause of the conversion correspondence.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ClauseRecord {
    pub clause: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, serde::Serialize, Default)]
pub struct ConversionReport {
    pub records: Vec<ClauseRecord>,
}

impl ConversionReport {
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

/// For every real lifting slot, the exit the conversion must play there,
/// derived independently of `u`'s own construction history: each lambda
/// block's chosen extender is carried through the block-start support
/// isomorphism and its reverse dropdown over the lifting-side model gives
/// the exits at the block's slots in order.
fn expected_lifting_exits(
    t: &IterationTree,
    u: &IterationTree,
    base: &HashSet<String>,
) -> Result<BTreeMap<usize, ExtenderInfo>, String> {
    let mut out = BTreeMap::new();
    for (start, end) in t.blocks() {
        if end == start {
            continue;
        }
        let Some(e) = t.nodes[end].exit else { continue };
        let r = unravel(&prefix(t, start + 1)).map_err(|e| e.to_string())?;
        let iso = table_iso(&r.arena, r.last_model(), &u.arena, &u.nodes[start].model, base)
            .ok_or_else(|| format!("no support isomorphism at block start {start}"))?;
        let e_u = map_ext(&iso, &e, &format!("chosen extender of block {start}"))
            .map_err(|e| e.to_string())?;
        let dd = u.nodes[start].model
            .rev_e_dropdown(&u.arena, &e_u)
            .map_err(|e| e.to_string())?;
        for (i, (_, f)) in dd.into_iter().enumerate() {
            out.insert(start + i, f);
        }
    }
    Ok(out)
}

/// Verify that the lifting side plays the core of real slot `b` at its
/// companion slot: on the lambda side the core is the dropdown entry
/// recorded there, and on the lifting side the companion's exit is the
/// independently recomputed dropdown entry of the same index. Returns the
/// companion slot.
fn companion_check(
    t: &IterationTree,
    u: &IterationTree,
    b: usize,
    expected: &BTreeMap<usize, ExtenderInfo>,
) -> Result<usize, String> {
    let bt = tilde(t, b).map_err(|e| format!("slot {b}: {e}"))?;
    let c = core_ext(t, b).map_err(|e| format!("slot {b}: {e}"))?;
    let lbl = t.nodes[bt].label.or(t.nodes[bt].exit).ok_or_else(|| {
        format!("slot {bt}: no dropdown entry to carry the slot-{b} core")
    })?;
    if lbl != c {
        return Err(format!(
            "slot {bt}: recorded dropdown entry differs from the slot-{b} core"
        ));
    }
    let g = u.nodes[bt].exit.ok_or_else(|| {
        format!("slot {bt}: lifting side plays nothing for the slot-{b} core")
    })?;
    match expected.get(&bt) {
        Some(f) if *f == g => Ok(bt),
        _ => Err(format!("slot {bt}: lifting exit is not the slot-{b} core")),
    }
}

fn branch_drops(t: &IterationTree, alpha: usize) -> Vec<usize> {
    t.branch(alpha)
        .into_iter()
        .filter(|&x| t.nodes[x].dropped)
        .collect()
}

/// The least branch successor after which the branch to `alpha` is
/// drop-free, together with its predecessor, as branch positions.
fn eps_node(t: &IterationTree, alpha: usize) -> Option<(usize, usize)> {
    let b = t.branch(alpha);
    if b.len() < 2 {
        return None;
    }
    let mut pos = 1;
    for (i, &x) in b.iter().enumerate().skip(2) {
        if t.nodes[x].dropped {
            pos = i;
        }
    }
    Some((b[pos], b[pos - 1]))
}

/// Extenders entering the branch of `t` at or after node `from`.
fn branch_extenders(t: &IterationTree, alpha: usize, from: usize) -> Vec<(ExtenderInfo, LevelTable)> {
    let b = t.branch(alpha);
    let start = b.iter().position(|&x| x == from).expect("on branch");
    let mut out = Vec::new();
    for &x in &b[start..] {
        if x == 0 {
            continue;
        }
        if let Some(e) = t.nodes[x - 1].exit {
            let ctx = t.nodes[x - 1]
                .model
                .segment(e.lh)
                .expect("exit indexes a level");
            out.push((e, ctx));
        }
    }
    out
}

/// Composed step embedding along the branch of `t` from node `from` up.
fn branch_map(t: &IterationTree, alpha: usize, from: usize) -> Option<Embedding> {
    let b = t.branch(alpha);
    let start = b.iter().position(|&x| x == from)?;
    let mut acc: Option<Embedding> = None;
    for &x in &b[start..] {
        let step = t.nodes[x].emb_star.clone()?;
        acc = Some(match acc {
            None => step,
            Some(prev) => prev.compose(&t.arena, &step)?,
        });
    }
    acc
}

/// Verify the full conversion correspondence between a nicely padded
/// lambda-exchange tree and its lifting conversion, one record per clause.
pub fn check_conversion_contract(t: &IterationTree, u: &IterationTree) -> ConversionReport {
    let mut rep = ConversionReport::default();
    let base = base_names(t);
    let last = t.len() - 1;

    // Shape: equal length and slotwise exchange-ordinal presence.
    let shape = t.len() == u.len()
        && (0..t.len() - 1).all(|g| t.nodes[g].tilde_nu.is_some() == u.nodes[g].tilde_nu.is_some());
    rep.push(
        "shape",
        shape,
        format!("lengths {} and {}", t.len(), u.len()),
    );
    if !shape {
        return rep;
    }
    // Independent reconstruction of what each real lifting slot must play,
    // consulted by the clauses that match cores against lifting exits.
    let expected = expected_lifting_exits(t, u, &base);

    // (a) Final models agree up to support isomorphism fixing the base.
    let final_iso = table_iso(
        &t.arena,
        &t.nodes[last].model,
        &u.arena,
        &u.nodes[last].model,
        &base,
    );
    rep.push(
        "a:final_model",
        final_iso.is_some(),
        "support isomorphism between the final models".into(),
    );

    // (b) The main branches drop together.
    let td = branch_drops(t, last);
    let ud = branch_drops(u, last);
    rep.push(
        "b:drops",
        td.is_empty() == ud.is_empty(),
        format!("drops at {td:?} vs {ud:?}"),
    );

    // (c) The stabilization points attach at the same slot.
    let te = eps_node(t, last);
    let ue = eps_node(u, last);
    let (delta_ok, detail) = match (te, ue) {
        (Some((te1, tdel)), Some((ue1, udel))) => (
            tdel == udel,
            format!("stable from {te1} over {tdel} vs from {ue1} over {udel}"),
        ),
        (None, None) => (true, "trivial trees".into()),
        _ => (false, "one side is trivial".into()),
    };
    rep.push("c:delta", delta_ok, detail);

    // (d) The segments entered there agree up to support isomorphism. A
    // stabilization point entering through padding copies the model, so the
    // authoritative segment is at the first real step from there on.
    if let (Some((te1, _)), Some((ue1, _))) = (te, ue) {
        let real_anchor = |s: &IterationTree, from: usize| -> Option<usize> {
            let b = s.branch(s.len() - 1);
            let pos = b.iter().position(|&x| x == from)?;
            b[pos..]
                .iter()
                .copied()
                .find(|&x| s.nodes[x].m_star.is_some())
        };
        let tn = real_anchor(t, te1).and_then(|x| t.nodes[x].m_star.as_ref());
        let un = real_anchor(u, ue1).and_then(|x| u.nodes[x].m_star.as_ref());
        let ok = match (tn, un) {
            (Some(x), Some(y)) => table_iso(&t.arena, x, &u.arena, y, &base).is_some(),
            _ => false,
        };
        rep.push("d:n_star", ok, "applied segments at the stabilization points".into());

        // (f) Final degrees agree.
        rep.push(
            "f:degree",
            t.nodes[last].degree == u.nodes[last].degree,
            format!("{:?} vs {:?}", t.nodes[last].degree, u.nodes[last].degree),
        );

        // (e) The lifting side's tail extenders are played exactly at the
        // companion slots of the lambda side's tail supports, enumerated by
        // increasing critical point of the cores.
        let fu_slots: Vec<usize> = {
            let b = u.branch(last);
            let from = b.iter().position(|&x| x == ue1).expect("on branch");
            b[from..]
                .iter()
                .filter(|&&x| x != 0 && u.nodes[x - 1].exit.is_some())
                .map(|&x| x - 1)
                .collect()
        };
        match (ext_order(t), &expected) {
            (Ok(order), Ok(expected)) => {
                let b = t.branch(last);
                let from = b.iter().position(|&x| x == te1).expect("on branch");
                let mut slots: BTreeSet<usize> = BTreeSet::new();
                for &x in &b[from..] {
                    if x == 0 || t.nodes[x - 1].exit.is_none() {
                        continue;
                    }
                    slots.extend(order.support(x - 1));
                }
                let mut cores: Vec<(usize, ExtenderInfo)> = Vec::new();
                let mut errs = Vec::new();
                for s in slots {
                    match core_ext(t, s) {
                        Ok(c) => cores.push((s, c)),
                        Err(e) => errs.push(e.to_string()),
                    }
                }
                cores.sort_by_key(|(_, c)| t.arena.rank(c.cr));
                let mut bts = Vec::new();
                for &(s, _) in &cores {
                    match companion_check(t, u, s, expected) {
                        Ok(bt) => bts.push(bt),
                        Err(e) => errs.push(e),
                    }
                }
                let ok = errs.is_empty() && bts == fu_slots;
                rep.push(
                    "e:core_enumeration",
                    ok,
                    if errs.is_empty() {
                        format!(
                            "{} cores at companions {:?} vs tail slots {:?}",
                            cores.len(),
                            bts,
                            fu_slots
                        )
                    } else {
                        errs.join("; ")
                    },
                );
            }
            (Err(e), _) => rep.push("e:core_enumeration", false, e.to_string()),
            (_, Err(e)) => rep.push("e:core_enumeration", false, e.clone()),
        }

        // (g) Both tail sequences rebuild the final model from the segment.
        // The lifting tail is taken by its lambda-side representatives: the
        // dropdown entries the lifting exits were verified against in (e)
        // and (4), with exits cut from the block-start models, so that both
        // sequences speak the same token family.
        if let (Some(nstar), false) = (tn, fu_slots.is_empty()) {
            let ft = branch_extenders(t, last, te1);
            let fu_t: Option<Vec<(ExtenderInfo, LevelTable)>> = fu_slots
                .iter()
                .map(|&s| {
                    let (start, _) = t.blocks().into_iter().find(|&(a, b)| a <= s && s <= b)?;
                    let g = t.nodes[s].label.or(t.nodes[s].exit)?;
                    let ex = t.nodes[start].model.segment(g.lh).ok()?;
                    Some((g, ex))
                })
                .collect();
            let ok = match &fu_t {
                Some(fu_t) => extenders_equivalent_over(
                    &t.arena,
                    &ft,
                    fu_t,
                    (nstar, t.nodes[te1].degree),
                    &base,
                ),
                None => Ok(false),
            };
            rep.push(
                "g:tail_equivalence",
                matches!(ok, Ok(true)),
                match ok {
                    Ok(v) => format!("sequence equivalence {v}"),
                    Err(e) => e.to_string(),
                },
            );
        } else {
            rep.push("g:tail_equivalence", true, "no tail extenders".into());
        }

        // (h) The composed tail maps agree on their common domain, through
        // the final support isomorphism.
        let ok = match (&final_iso, branch_map(t, last, te1), branch_map(u, last, ue1)) {
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
        rep.push("h:tail_maps", ok, "pointwise agreement through the final isomorphism".into());
    }

    // (4) Comparability: along each real slot's decomposition support, the
    // lifting side plays the cores at the companion slots, in tree order
    // sorted by critical point, without degree drops in between.
    check_comparability(t, u, &expected, &mut rep);
    // (5) Iterated comparability along drop-free tree-order pairs.
    check_iterated_comparability(t, u, &mut rep);
    rep
}

fn check_comparability(
    t: &IterationTree,
    u: &IterationTree,
    expected: &Result<BTreeMap<usize, ExtenderInfo>, String>,
    rep: &mut ConversionReport,
) {
    let order = match ext_order(t) {
        Ok(o) => o,
        Err(e) => {
            rep.push("4:comparability", false, e.to_string());
            return;
        }
    };
    let expected = match expected {
        Ok(m) => m,
        Err(e) => {
            rep.push("4:comparability", false, e.clone());
            return;
        }
    };
    let mut checks = 0usize;
    let mut bad = Vec::new();
    for eta in 0..t.len() - 1 {
        if t.nodes[eta].exit.is_none() {
            continue;
        }
        let xs = order.support(eta);
        for &b in &xs {
            checks += 1;
            if let Err(e) = companion_check(t, u, b, expected) {
                bad.push(e);
            }
        }
        // Order the support by critical point and follow the branch.
        let mut sorted = xs.clone();
        sorted.sort_by_key(|&b| {
            t.arena.rank(t.nodes[b].exit.expect("support slots are real").cr)
        });
        let target = u.branch(eta + 1);
        let mut prev_pos: Option<usize> = None;
        for &b in &sorted {
            let Ok(bt) = tilde(t, b) else { continue };
            checks += 1;
            let Some(pos) = target.iter().position(|&z| z == bt + 1) else {
                bad.push(format!("companion successor {} off the lifting branch of {}", bt + 1, eta + 1));
                continue;
            };
            if let Some(pp) = prev_pos {
                if pos < pp {
                    bad.push(format!("companions out of order at slot {eta}"));
                }
            }
            prev_pos = Some(pos);
        }
        if let Some(&bmin) = sorted.first() {
            if let Ok(bt) = tilde(t, bmin) {
                if let Some(pos) = target.iter().position(|&z| z == bt + 1) {
                    if target[pos + 1..].iter().any(|&z| u.nodes[z].dropped_deg) {
                        bad.push(format!("degree drop past the least companion of slot {eta}"));
                    }
                }
            }
        }
    }
    rep.push(
        "4:comparability",
        bad.is_empty(),
        if bad.is_empty() {
            format!("{checks} checks")
        } else {
            bad.join("; ")
        },
    );
}

fn check_iterated_comparability(t: &IterationTree, u: &IterationTree, rep: &mut ConversionReport) {
    let order = match ext_order(t) {
        Ok(o) => o,
        Err(e) => {
            rep.push("5:iterated_comparability", false, e.to_string());
            return;
        }
    };
    let mut checks = 0usize;
    let mut bad = Vec::new();
    for ep in 0..t.len() {
        // ep = eta' + 1 ranges over successor nodes with a real entering slot.
        if ep == 0 || t.nodes[ep - 1].exit.is_none() || t.is_special(ep) {
            continue;
        }
        let bprime = t.branch(ep);
        for &zeta in &bprime[..bprime.len() - 1] {
            if zeta == 0 || t.nodes[zeta - 1].exit.is_none() {
                continue;
            }
            let pos = bprime.iter().position(|&x| x == zeta).expect("on branch");
            if bprime[pos + 1..].iter().any(|&x| t.nodes[x].dropped) {
                continue;
            }
            let (eta, etap) = (zeta - 1, ep - 1);
            let (Ok(et), Ok(ept)) = (tilde(t, eta), tilde(t, etap)) else { continue };
            let ub = u.branch(ep);
            let on = |x: usize| ub.iter().position(|&z| z == x);
            for &b in &order.support(eta) {
                for &bp in &order.support(etap) {
                    let (Ok(bt), Ok(bpt)) = (tilde(t, b), tilde(t, bp)) else { continue };
                    checks += 1;
                    let chain = [et + 1, bt + 1, eta + 1, ept + 1, bpt + 1, ep];
                    let posns: Vec<Option<usize>> = chain.iter().map(|&x| on(x)).collect();
                    if posns.iter().any(|p| p.is_none())
                        || posns.windows(2).any(|w| w[0].unwrap() > w[1].unwrap())
                    {
                        bad.push(format!("broken chain between slots {eta} and {etap}"));
                        continue;
                    }
                    let start = posns[0].unwrap();
                    if ub[start + 1..].iter().any(|&z| u.nodes[z].dropped) {
                        bad.push(format!("model drop past slot {et} on the lifting branch"));
                    }
                    let tdeg = {
                        let p = bprime.iter().position(|&x| x == zeta).unwrap();
                        bprime[p + 1..].iter().any(|&x| t.nodes[x].dropped_deg)
                    };
                    if !tdeg && ub[start + 1..].iter().any(|&z| u.nodes[z].dropped_deg) {
                        bad.push(format!("degree drop past slot {et} on the lifting branch"));
                    }
                }
            }
        }
    }
    rep.push(
        "5:iterated_comparability",
        bad.is_empty(),
        if bad.is_empty() {
            format!("{checks} checks")
        } else {
            bad.join("; ")
        },
    );
}

/// Reconstruct the unique nicely padded lambda-exchange tree whose
/// conversion unpads to the given lifting tree: each lifting block's chosen
/// extender is pulled back through the support isomorphism with the current
/// lambda-side model, played as a block, and the result unravelled.
/// Returns the tree together with its conversion.
pub fn invert(u_prime: &IterationTree) -> Result<(IterationTree, IterationTree), JconvError> {
    if u_prime.rules != Rules::LiftingMsMax {
        return Err(JconvError::Unsuitable(format!("{:?} rules", u_prime.rules)));
    }
    if (0..u_prime.len() - 1).any(|g| u_prime.nodes[g].exit.is_none()) {
        return Err(JconvError::Unsuitable("padded input; unpad first".into()));
    }
    let base = base_names(u_prime);
    let mut t = IterationTree::new(
        u_prime.arena.clone(),
        u_prime.nodes[0].model.clone(),
        Rules::JMax,
    )?;
    for (start, end) in u_prime.blocks() {
        let Some(e_u) = u_prime.nodes[end].exit else { continue };
        let iso = table_iso(
            &u_prime.arena,
            &u_prime.nodes[start].model,
            &t.arena,
            t.last_model(),
            &base,
        )
        .ok_or_else(|| {
            JconvError::Contract(format!(
                "no support isomorphism back at lifting block start {start}"
            ))
        })?;
        let e_t = map_ext(&iso, &e_u, &format!("chosen extender of lifting block {start}"))?;
        t.apply_j_block(e_t)?;
        t = unravel(&t)?;
    }
    let v = convert(&t)?;
    Ok((t, v))
}
