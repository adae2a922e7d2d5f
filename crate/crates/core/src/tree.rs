//! Finite iteration trees.
//!
//! A tree is a growing list of slots. Slot data (exit extender, padding
//! label, exchange ordinal) is attached to slot `gamma` when the tree is
//! extended to slot `gamma + 1`; the new slot records how its model arose
//! (predecessor, applied segment, degree, drop flags, step embedding).
//!
//! The same kernel hosts the plain J and weakly-MS rule sets (one slot per
//! extender), lifting-MS trees (one block of slots per chosen extender,
//! carrying its reverse dropdown), and nicely padded J-trees (padding slots
//! labelled by the despecialized dropdown, then the real extender).

use serde::{Deserialize, Serialize};

use crate::arena::{Arena, Token};
use crate::premouse::{
    Degree, ExtenderInfo, Flavor, LevelTable, PremouseError, WireExtender, WireLevel,
};
use crate::ultrapower::{resolve_drop, ultrapower, Embedding, UltError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rules {
    JMax,
    WeaklyMsMax,
    LiftingMsMax,
    MsMMax,
    MsUMax,
}

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("base unsuitable for the rule set: {0}")]
    Unsuitable(String),
    #[error("extender not legal here: {0}")]
    IllegalExtender(String),
    #[error("engine failure: {0}")]
    Engine(#[from] UltError),
    #[error("structure error: {0}")]
    Premouse(#[from] PremouseError),
    #[error("validation failed at node {node}: {what}")]
    Violation { node: usize, what: String },
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub model: LevelTable,
    pub degree: Degree,
    /// Exit extender of this slot; `None` on padding slots and the last slot.
    pub exit: Option<ExtenderInfo>,
    /// `G`-label on padding slots of nicely padded J-trees.
    pub label: Option<ExtenderInfo>,
    /// Exchange ordinal of this slot, set when the slot has been played.
    pub tilde_nu: Option<Token>,
    /// Tree predecessor of this node (`None` at the root).
    pub pred: Option<usize>,
    /// The segment the extender was applied to, for non-padding steps.
    pub m_star: Option<LevelTable>,
    /// Step embedding `M* -> model` (identity for padding steps).
    pub emb_star: Option<Embedding>,
    /// Drop in model at this node.
    pub dropped: bool,
    /// Drop in model or degree at this node.
    pub dropped_deg: bool,
}

#[derive(Debug, Clone)]
pub struct IterationTree {
    pub arena: Arena,
    pub rules: Rules,
    pub nodes: Vec<TreeNode>,
    /// Starting slots of the blocks (`eta` sequence); always begins with 0.
    pub eta: Vec<usize>,
}

impl IterationTree {
    pub fn new(arena: Arena, base: LevelTable, rules: Rules) -> Result<Self, TreeError> {
        match (rules, base.flavor) {
            (Rules::JMax | Rules::WeaklyMsMax | Rules::LiftingMsMax, Flavor::J) => {}
            (Rules::MsMMax | Rules::MsUMax, Flavor::MS) => {}
            (r, f) => {
                return Err(TreeError::Unsuitable(format!(
                    "{f:?} table under {r:?} rules"
                )))
            }
        }
        let degree = base.msound.unwrap_or(Degree::Omega);
        Ok(IterationTree {
            arena,
            rules,
            nodes: vec![TreeNode {
                model: base,
                degree,
                exit: None,
                label: None,
                tilde_nu: None,
                pred: None,
                m_star: None,
                emb_star: None,
                dropped: false,
                dropped_deg: false,
            }],
            eta: vec![0],
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last_model(&self) -> &LevelTable {
        &self.nodes.last().unwrap().model
    }

    /// Branch `[0, alpha]` in tree order, ascending.
    pub fn branch(&self, alpha: usize) -> Vec<usize> {
        let mut b = vec![alpha];
        let mut cur = alpha;
        while let Some(p) = self.nodes[cur].pred {
            b.push(p);
            cur = p;
        }
        b.reverse();
        b
    }

    /// The exchange ordinal the current rule set assigns to `e`: lambda
    /// under J rules, nu under the weakly-MS and lifting rules, and
    /// iota(M|lh(e)) = max(nu, lgcd of the exit segment) under MS rules.
    pub fn exchange_ordinal(&self, e: &ExtenderInfo) -> Token {
        match self.rules {
            Rules::JMax => e.lambda,
            Rules::WeaklyMsMax | Rules::LiftingMsMax => e.nu,
            Rules::MsMMax | Rules::MsUMax => self
                .last_model()
                .segment(e.lh)
                .map(|seg| self.arena.max(e.nu, seg.top().lgcd))
                .unwrap_or(e.nu),
        }
    }

    fn exit_segment(&self, e: &ExtenderInfo) -> Result<LevelTable, TreeError> {
        let m = self.last_model();
        let seg = m.segment(e.lh).map_err(|_| {
            TreeError::IllegalExtender(format!(
                "no level of the last model indexed at {}",
                self.arena.name(e.lh)
            ))
        })?;
        if seg.top_extender() != Some(e) {
            return Err(TreeError::IllegalExtender(
                "extender does not match the level at its index".into(),
            ));
        }
        Ok(seg)
    }

    /// Append one real step: play `e` at the current last slot with the
    /// given exchange ordinal and attach the resulting model.
    pub fn step(&mut self, e: ExtenderInfo, tilde_nu: Token) -> Result<(), TreeError> {
        let exit = self.exit_segment(&e)?;
        let gamma = self.nodes.len() - 1;
        self.nodes[gamma].exit = Some(e);
        self.nodes[gamma].tilde_nu = Some(tilde_nu);

        // Predecessor: least slot whose exchange ordinal is above cr.
        let delta = (0..=gamma)
            .find(|&d| {
                self.nodes[d]
                    .tilde_nu
                    .is_some_and(|nu| self.arena.lt(e.cr, nu))
            })
            .expect("cr < nu <= tilde_nu of the slot itself");

        let crplus_exit = exit.proper_plus_of(&self.arena, e.cr);
        let pred_deg = self.nodes[delta].degree;
        let (m_star, degree, dropped) = resolve_drop(
            &self.arena,
            &self.nodes[delta].model,
            pred_deg,
            e.cr,
            crplus_exit,
        )
        .ok_or(UltError::NoAdmissiblePair(gamma + 1))?;

        let res = ultrapower(&mut self.arena, &m_star, &e, degree, &exit)?;
        let dropped_deg = dropped || degree < pred_deg;
        self.nodes.push(TreeNode {
            model: res.model,
            degree,
            exit: None,
            label: None,
            tilde_nu: None,
            pred: Some(delta),
            m_star: Some(m_star),
            emb_star: Some(res.emb),
            dropped,
            dropped_deg,
        });
        Ok(())
    }

    /// Append one step whose resulting model is supplied directly instead of
    /// computed by the engine. The symbolic ultrapower only keeps the
    /// skeleton levels of the real construction, so scenario fixtures may
    /// need to posit a successor model with extra structure; this records
    /// the slot exactly as `step` would, trusting the supplied data.
    pub fn push_scripted(
        &mut self,
        e: ExtenderInfo,
        tilde_nu: Token,
        pred: usize,
        model: LevelTable,
        degree: Degree,
        emb: Embedding,
    ) {
        let gamma = self.nodes.len() - 1;
        self.nodes[gamma].exit = Some(e);
        self.nodes[gamma].tilde_nu = Some(tilde_nu);
        let pred_deg = self.nodes[pred].degree;
        let m_star = self.nodes[pred].model.clone();
        self.nodes.push(TreeNode {
            model,
            degree,
            exit: None,
            label: None,
            tilde_nu: None,
            pred: Some(pred),
            m_star: Some(m_star),
            emb_star: Some(emb),
            dropped: false,
            dropped_deg: degree < pred_deg,
        });
    }

    /// Append one padding step (model and degree copied, identity map).
    pub fn pad(&mut self, label: Option<ExtenderInfo>, tilde_nu: Option<Token>) {
        let gamma = self.nodes.len() - 1;
        self.nodes[gamma].exit = None;
        self.nodes[gamma].label = label;
        self.nodes[gamma].tilde_nu = tilde_nu;
        let model = self.nodes[gamma].model.clone();
        let degree = self.nodes[gamma].degree;
        self.nodes.push(TreeNode {
            model,
            degree,
            exit: None,
            label: None,
            tilde_nu: None,
            pred: Some(gamma),
            m_star: None,
            emb_star: Some(Embedding::identity()),
            dropped: false,
            dropped_deg: false,
        });
    }

    /// The slot of the most recent non-padding exit, if any.
    pub fn last_real_exit(&self) -> Option<(usize, ExtenderInfo)> {
        self.nodes
            .iter()
            .enumerate()
            .rev()
            .find_map(|(i, n)| n.exit.map(|e| (i, e)))
    }

    /// Whether `alpha` is special: its model is active and some `beta+1` on
    /// its branch was formed without later drops, with the nu of the applied
    /// segment's top extender at or below `cr` of the forming extender.
    pub fn is_special(&self, alpha: usize) -> bool {
        self.least_witness(alpha).is_some()
    }

    /// The least witness `beta` for `alpha` being special.
    pub fn least_witness(&self, alpha: usize) -> Option<usize> {
        if !self.nodes[alpha].model.is_active() {
            return None;
        }
        let branch = self.branch(alpha);
        let mut best: Option<usize> = None;
        for (pos, &zeta) in branch.iter().enumerate() {
            if zeta == 0 {
                continue;
            }
            let beta = zeta - 1;
            if self.nodes[beta].exit.is_none() {
                continue;
            }
            // No drop in model on (beta+1, alpha] of the branch.
            if branch[pos + 1..].iter().any(|&x| self.nodes[x].dropped) {
                continue;
            }
            let Some(ms) = &self.nodes[zeta].m_star else { continue };
            let Some(f) = ms.top_extender() else { continue };
            let e_beta = self.nodes[beta].exit.unwrap();
            if self.arena.le(f.nu, e_beta.cr) {
                best = Some(best.map_or(beta, |b: usize| b.min(beta)));
            }
        }
        best
    }

    /// The core extender of `F(M_alpha)` for special `alpha`.
    pub fn core_of(&self, alpha: usize) -> Option<ExtenderInfo> {
        let beta = self.least_witness(alpha)?;
        self.nodes[beta + 1]
            .m_star
            .as_ref()
            .and_then(|m| m.top_extender().copied())
    }

    /// Whether `alpha` is very special: special with `F(M_alpha)` as exit.
    pub fn is_very_special(&self, alpha: usize) -> bool {
        let Some(e) = self.nodes[alpha].exit else { return false };
        self.is_special(alpha)
            && self.nodes[alpha].model.top_extender() == Some(&e)
    }

    /// Despecialized reverse dropdown of `(M_alpha, e)` at the last slot.
    pub fn despec_rev_e_dropdown(
        &self,
        alpha: usize,
        e: &ExtenderInfo,
    ) -> Result<Vec<ExtenderInfo>, TreeError> {
        let m = &self.nodes[alpha].model;
        let dd = m.rev_e_dropdown(&self.arena, e)?;
        let mut out: Vec<ExtenderInfo> = dd.into_iter().map(|(_, f)| f).collect();
        if self.is_special(alpha) && m.top_extender() == out.first() {
            out.remove(0);
        }
        Ok(out)
    }

    /// Extend a lifting-MS tree by the whole block for chosen extender `e`.
    pub fn apply_lifting_block(&mut self, e: ExtenderInfo) -> Result<(), TreeError> {
        assert_eq!(self.rules, Rules::LiftingMsMax);
        if let Some((_, prev)) = self.last_real_exit() {
            if !self.arena.lt(prev.lh, e.lh) {
                return Err(TreeError::IllegalExtender(
                    "index not above the previous chosen extender".into(),
                ));
            }
        }
        let dd = self.last_model().rev_e_dropdown(&self.arena, &e)?;
        for (_, f) in dd {
            let nu = f.nu;
            self.step(f, nu)?;
        }
        self.eta.push(self.nodes.len() - 1);
        Ok(())
    }

    /// Extend a nicely padded J-tree by the block for chosen extender `e`:
    /// padding slots labelled by the despecialized dropdown, then `e`.
    pub fn apply_j_block(&mut self, e: ExtenderInfo) -> Result<(), TreeError> {
        assert_eq!(self.rules, Rules::JMax);
        let alpha = self.nodes.len() - 1;
        let labels = self.despec_rev_e_dropdown(alpha, &e)?;
        for g in labels {
            let nu = g.nu;
            self.pad(Some(g), Some(nu));
        }
        self.step(e, e.lambda)?;
        self.eta.push(self.nodes.len() - 1);
        Ok(())
    }

    /// Plain (unblocked) application under the J or weakly-MS rules.
    pub fn apply_plain(&mut self, e: ExtenderInfo) -> Result<(), TreeError> {
        if let Some((_, prev)) = self.last_real_exit() {
            if !self.arena.lt(prev.lh, e.lh) {
                return Err(TreeError::IllegalExtender(
                    "index not above the previous extender".into(),
                ));
            }
        }
        let nu = self.exchange_ordinal(&e);
        self.step(e, nu)?;
        self.eta.push(self.nodes.len() - 1);
        Ok(())
    }

    /// Candidate extenders of the last model legal under the current rules,
    /// filtered to those whose application actually succeeds.
    pub fn legal_exits(&self) -> Vec<ExtenderInfo> {
        let bound = self.last_real_exit().map(|(_, e)| e.lh);
        let mut out = Vec::new();
        for e in self.last_model().extended_sequence() {
            if let Some(b) = bound {
                if !self.arena.lt(b, e.lh) {
                    continue;
                }
            }
            let mut probe = self.clone();
            let ok = match self.rules {
                Rules::LiftingMsMax => probe.apply_lifting_block(e).is_ok(),
                Rules::JMax => probe.apply_j_block(e).is_ok(),
                _ => probe.apply_plain(e).is_ok(),
            };
            if ok {
                out.push(e);
            }
        }
        out
    }

    /// Block index layout: per block `alpha`, the slot range
    /// `eta[alpha] ..= eta[alpha] + n_alpha` (inclusive of the chosen slot).
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, &start) in self.eta.iter().enumerate() {
            let end = if a + 1 < self.eta.len() {
                self.eta[a + 1] - 1
            } else {
                self.nodes.len() - 1
            };
            out.push((start, end));
        }
        out
    }
}

/// One reported violation of the lifting-MS normality facts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub part: u8,
    pub node: usize,
    pub what: String,
}

/// Check the normality facts of iteration trees, returning all violations
/// found. Parts 1-3 (nu monotonicity, the lambda bounds, and cr below the
/// nu of the applied segment's top) are consequences of blocks carrying
/// full reverse dropdowns, so they are only checked on lifting-MS trees;
/// part 4 (predecessor minimality) holds for every rule set, and part 5
/// (block integrity) is again lifting-specific.
pub fn validate_tree(tree: &IterationTree) -> Vec<Violation> {
    let a = &tree.arena;
    let mut out = Vec::new();
    let lifting = tree.rules == Rules::LiftingMsMax;

    // Part 1: nu strictly increasing across played slots.
    let played: Vec<(usize, ExtenderInfo)> = if lifting {
        tree.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.exit.map(|e| (i, e)))
            .collect()
    } else {
        Vec::new()
    };
    for w in played.windows(2) {
        if !a.lt(w[0].1.nu, w[1].1.nu) {
            out.push(Violation {
                part: 1,
                node: w[1].0,
                what: format!("nu not above nu of slot {}", w[0].0),
            });
        }
    }

    // Part 2: lambda of each block-final extender below nu of any later
    // active model, and of the immediately preceding extender.
    let blocks = tree.blocks();
    for (gamma, node) in tree.nodes.iter().enumerate() {
        if !lifting {
            break;
        }
        let Some(f) = node.model.top_extender() else { continue };
        for &(_, end) in &blocks {
            if end >= gamma {
                continue;
            }
            if let Some(e) = tree.nodes[end].exit {
                if !a.lt(e.lambda, f.nu) {
                    out.push(Violation {
                        part: 2,
                        node: gamma,
                        what: format!("lambda of block-final slot {end} not below nu(F)"),
                    });
                }
            }
        }
        if gamma > 0 {
            if let Some(e) = tree.nodes[gamma - 1].exit {
                if !a.lt(e.lambda, f.nu) {
                    out.push(Violation {
                        part: 2,
                        node: gamma,
                        what: "lambda of the preceding extender not below nu(F)".into(),
                    });
                }
            }
        }
    }

    // Part 3: cr below nu of the applied segment's top extender.
    for (gamma1, node) in tree.nodes.iter().enumerate() {
        if !lifting {
            break;
        }
        let (Some(ms), Some(_)) = (&node.m_star, node.pred) else { continue };
        let Some(f) = ms.top_extender() else { continue };
        if let Some(e) = tree.nodes[gamma1 - 1].exit {
            if !a.lt(e.cr, f.nu) {
                out.push(Violation {
                    part: 3,
                    node: gamma1,
                    what: "cr not below nu of the applied segment's top".into(),
                });
            }
        }
    }

    // Predecessor minimality.
    for (gamma1, node) in tree.nodes.iter().enumerate() {
        let Some(p) = node.pred else { continue };
        let Some(e) = tree.nodes[gamma1 - 1].exit else { continue };
        let ok_at = |d: usize| {
            tree.nodes[d]
                .tilde_nu
                .is_some_and(|nu| a.lt(e.cr, nu))
        };
        if !ok_at(p) || (0..p).any(ok_at) {
            out.push(Violation {
                part: 4,
                node: gamma1,
                what: "predecessor not minimal".into(),
            });
        }
    }

    // Block integrity for lifting-MS trees: every contiguous run of block
    // slots is the full reverse dropdown of its first model and last slot.
    if tree.rules == Rules::LiftingMsMax {
        for &(start, end) in &blocks {
            if tree.nodes[end].exit.is_none() {
                continue;
            }
            for j in start..=end {
                for k in j..=end {
                    let ek = tree.nodes[k].exit.unwrap();
                    match tree.nodes[j].model.rev_e_dropdown(a, &ek) {
                        Ok(dd) => {
                            let got: Vec<ExtenderInfo> =
                                dd.into_iter().map(|(_, f)| f).collect();
                            let want: Vec<ExtenderInfo> =
                                (j..=k).map(|s| tree.nodes[s].exit.unwrap()).collect();
                            if got != want {
                                out.push(Violation {
                                    part: 5,
                                    node: j,
                                    what: format!(
                                        "slots {j}..={k} are not the full reverse dropdown"
                                    ),
                                });
                            }
                        }
                        Err(err) => out.push(Violation {
                            part: 5,
                            node: j,
                            what: format!("dropdown recomputation failed: {err}"),
                        }),
                    }
                }
            }
        }
    }

    out
}

// Game transcripts: the chosen extenders by index name, replayable.

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GameTranscript {
    pub rules: Rules,
    /// Index (lh) names of the chosen extenders, in play order.
    pub moves: Vec<String>,
}

impl GameTranscript {
    pub fn of(tree: &IterationTree) -> GameTranscript {
        let moves = tree
            .blocks()
            .iter()
            .filter_map(|&(_, end)| tree.nodes[end].exit)
            .map(|e| tree.arena.name(e.lh).to_string())
            .collect();
        GameTranscript { rules: tree.rules, moves }
    }

    pub fn replay(
        &self,
        arena: Arena,
        base: LevelTable,
    ) -> Result<IterationTree, TreeError> {
        let mut tree = IterationTree::new(arena, base, self.rules)?;
        for name in &self.moves {
            let lh = tree.arena.lookup(name).ok_or_else(|| {
                TreeError::IllegalExtender(format!("unknown index name {name:?}"))
            })?;
            let e = tree
                .last_model()
                .extended_sequence()
                .into_iter()
                .find(|e| e.lh == lh)
                .ok_or_else(|| {
                    TreeError::IllegalExtender(format!(
                        "no extender indexed at {name:?} on the last model"
                    ))
                })?;
            match self.rules {
                Rules::LiftingMsMax => tree.apply_lifting_block(e)?,
                Rules::JMax => tree.apply_j_block(e)?,
                _ => tree.apply_plain(e)?,
            }
        }
        Ok(tree)
    }
}

/// Seeded random tree: repeatedly pick a legal extender, with a bias toward
/// candidates whose dropdown has length at least 2.
pub fn random_tree<R: rand::Rng>(
    arena: Arena,
    base: LevelTable,
    rng: &mut R,
    budget: usize,
    rules: Rules,
) -> Result<IterationTree, TreeError> {
    let mut tree = IterationTree::new(arena, base, rules)?;
    for _ in 0..budget {
        let mut cands = tree.legal_exits();
        if cands.is_empty() {
            break;
        }
        cands.sort_by_key(|e| tree.arena.rank(e.lh));
        // Prefer a candidate heading a longer dropdown most of the time.
        let pick = if rng.gen_bool(0.7) {
            let scored: Vec<(usize, usize)> = cands
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let n = tree
                        .last_model()
                        .rev_e_dropdown(&tree.arena, e)
                        .map(|d| d.len())
                        .unwrap_or(1);
                    (i, n)
                })
                .collect();
            let best = scored.iter().map(|&(_, n)| n).max().unwrap();
            let top: Vec<usize> = scored
                .into_iter()
                .filter(|&(_, n)| n == best)
                .map(|(i, _)| i)
                .collect();
            top[rng.gen_range(0..top.len())]
        } else {
            rng.gen_range(0..cands.len())
        };
        let e = cands[pick];
        match rules {
            Rules::LiftingMsMax => tree.apply_lifting_block(e)?,
            Rules::JMax => tree.apply_j_block(e)?,
            _ => tree.apply_plain(e)?,
        }
    }
    Ok(tree)
}

// Wire format.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<WireExtender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<WireExtender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilde_nu: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<usize>,
    pub degree: Degree,
    pub dropped: bool,
    pub dropped_deg: bool,
    pub model: Vec<WireLevel>,
    /// Step embedding as name pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emb: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireTree {
    pub rules: Rules,
    pub arena: Vec<String>,
    pub eta: Vec<usize>,
    pub nodes: Vec<WireNode>,
}

fn wire_ext(arena: &Arena, e: &ExtenderInfo) -> WireExtender {
    WireExtender {
        cr: arena.name(e.cr).into(),
        nu: arena.name(e.nu).into(),
        lambda: arena.name(e.lambda).into(),
        lh: arena.name(e.lh).into(),
        flavor: e.flavor,
        nu_is_limit_of_generators: e.nu_is_limit_of_generators,
    }
}

fn unwire_ext(arena: &Arena, w: &WireExtender) -> Result<ExtenderInfo, PremouseError> {
    let tok = |s: &str| {
        arena
            .lookup(s)
            .ok_or_else(|| PremouseError::Invalid(format!("unknown token name {s:?}")))
    };
    Ok(ExtenderInfo {
        cr: tok(&w.cr)?,
        nu: tok(&w.nu)?,
        lambda: tok(&w.lambda)?,
        lh: tok(&w.lh)?,
        flavor: w.flavor,
        nu_is_limit_of_generators: w.nu_is_limit_of_generators,
    })
}

impl IterationTree {
    pub fn to_wire(&self) -> WireTree {
        let a = &self.arena;
        WireTree {
            rules: self.rules,
            arena: a.to_names(),
            eta: self.eta.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| WireNode {
                    exit: n.exit.map(|e| wire_ext(a, &e)),
                    label: n.label.map(|e| wire_ext(a, &e)),
                    tilde_nu: n.tilde_nu.map(|t| a.name(t).into()),
                    pred: n.pred,
                    degree: n.degree,
                    dropped: n.dropped,
                    dropped_deg: n.dropped_deg,
                    model: n.model.to_wire(a).levels,
                    emb: n.emb_star.as_ref().map(|e| {
                        // Pairs in arena (rank) order, so that re-wiring a
                        // deserialized tree reproduces the bytes.
                        let mut pairs: Vec<(Token, Token)> =
                            e.map.iter().map(|(&x, &y)| (x, y)).collect();
                        pairs.sort_by_key(|&(x, _)| a.rank(x));
                        pairs
                            .into_iter()
                            .map(|(x, y)| (a.name(x).into(), a.name(y).into()))
                            .collect()
                    }),
                })
                .collect(),
        }
    }

    pub fn from_wire(w: &WireTree) -> Result<IterationTree, PremouseError> {
        let arena = Arena::from_names(&w.arena)
            .map_err(|e| PremouseError::Invalid(e.to_string()))?;
        let tok = |s: &str| {
            arena
                .lookup(s)
                .ok_or_else(|| PremouseError::Invalid(format!("unknown token name {s:?}")))
        };
        let flavor = match w.rules {
            Rules::MsMMax | Rules::MsUMax => Flavor::MS,
            _ => Flavor::J,
        };
        let mut nodes = Vec::new();
        for wn in &w.nodes {
            let model_wire = crate::premouse::WireTable {
                flavor,
                msound: None,
                arena: w.arena.clone(),
                levels: wn.model.clone(),
            };
            let (_, model) = LevelTable::from_wire(&model_wire)?;
            let emb_star = match &wn.emb {
                None => None,
                Some(pairs) => {
                    let mut map = std::collections::BTreeMap::new();
                    for (x, y) in pairs {
                        map.insert(tok(x)?, tok(y)?);
                    }
                    let critical = wn
                        .exit
                        .as_ref()
                        .map(|e| tok(&e.cr))
                        .transpose()?;
                    Some(Embedding { map, critical })
                }
            };
            nodes.push(TreeNode {
                model,
                degree: wn.degree,
                exit: wn.exit.as_ref().map(|e| unwire_ext(&arena, e)).transpose()?,
                label: wn.label.as_ref().map(|e| unwire_ext(&arena, e)).transpose()?,
                tilde_nu: wn.tilde_nu.as_deref().map(tok).transpose()?,
                pred: wn.pred,
                m_star: None,
                emb_star,
                dropped: wn.dropped,
                dropped_deg: wn.dropped_deg,
            });
        }
        Ok(IterationTree {
            arena,
            rules: w.rules,
            nodes,
            eta: w.eta.clone(),
        })
    }

    /// Serialization that is invariant under token renaming: the arena is
    /// restricted to the tokens the tree actually mentions and those are
    /// renamed by rank. Two trees that are order-isomorphic copies of each
    /// other (built along different construction paths, hence with different
    /// token names) canonicalize to the same bytes.
    pub fn canonical_wire(&self) -> String {
        let wire = self.to_wire();
        let mut used: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        let take_ext = |used: &mut std::collections::BTreeSet<String>, e: &WireExtender| {
            for s in [&e.cr, &e.nu, &e.lambda, &e.lh] {
                used.insert(s.clone());
            }
        };
        for n in &wire.nodes {
            if let Some(e) = &n.exit {
                take_ext(&mut used, e);
            }
            if let Some(e) = &n.label {
                take_ext(&mut used, e);
            }
            if let Some(t) = &n.tilde_nu {
                used.insert(t.clone());
            }
            for l in &n.model {
                used.insert(l.height.clone());
                used.insert(l.lgcd.clone());
                for p in &l.projecta {
                    used.insert(p.clone());
                }
                if let Some(e) = &l.active {
                    take_ext(&mut used, e);
                }
            }
            if let Some(pairs) = &n.emb {
                for (x, y) in pairs {
                    used.insert(x.clone());
                    used.insert(y.clone());
                }
            }
        }
        let mut ordered: Vec<String> = used.into_iter().collect();
        ordered.sort_by_key(|s| self.arena.rank(self.arena.lookup(s).expect("used token")));
        let rename: std::collections::HashMap<String, String> = ordered
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), format!("t{i}")))
            .collect();
        let rn = |s: &String| rename[s].clone();
        let rn_ext = |e: &WireExtender| WireExtender {
            cr: rn(&e.cr),
            nu: rn(&e.nu),
            lambda: rn(&e.lambda),
            lh: rn(&e.lh),
            flavor: e.flavor,
            nu_is_limit_of_generators: e.nu_is_limit_of_generators,
        };
        let out = WireTree {
            rules: wire.rules,
            arena: (0..ordered.len()).map(|i| format!("t{i}")).collect(),
            eta: wire.eta.clone(),
            nodes: wire
                .nodes
                .iter()
                .map(|n| WireNode {
                    exit: n.exit.as_ref().map(rn_ext),
                    label: n.label.as_ref().map(rn_ext),
                    tilde_nu: n.tilde_nu.as_ref().map(rn),
                    pred: n.pred,
                    degree: n.degree,
                    dropped: n.dropped,
                    dropped_deg: n.dropped_deg,
                    model: n
                        .model
                        .iter()
                        .map(|l| WireLevel {
                            height: rn(&l.height),
                            active: l.active.as_ref().map(rn_ext),
                            projecta: l.projecta.iter().map(rn).collect(),
                            lgcd: rn(&l.lgcd),
                        })
                        .collect(),
                    emb: n.emb.as_ref().map(|pairs| {
                        pairs.iter().map(|(x, y)| (rn(x), rn(y))).collect()
                    }),
                })
                .collect(),
        };
        serde_json::to_string(&out).expect("serializable")
    }

    /// Graphviz rendering: solid edges for tree order, dashed for exit
    /// provenance, double circles for drops.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("digraph tree {\n  rankdir=LR;\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let deg = match n.degree {
                Degree::Omega => "w".to_string(),
                Degree::Fin(k) => k.to_string(),
            };
            let shape = if n.dropped { "doublecircle" } else { "circle" };
            let _ = writeln!(s, "  n{i} [label=\"{i}:{deg}\", shape={shape}];");
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.pred {
                let _ = writeln!(s, "  n{p} -> n{i};");
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(e) = n.exit {
                let _ = writeln!(
                    s,
                    "  n{i} -> n{} [style=dashed, label=\"{}\"];",
                    i + 1,
                    self.arena.name(e.lh)
                );
            }
        }
        s.push_str("}\n");
        s
    }
}
