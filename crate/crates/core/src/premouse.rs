//! Abstract premice as finite level tables.
//!
//! A `LevelTable` is a strictly height-increasing list of levels; the top
//! level is the premouse itself. Cardinal structure is derived from the
//! projecta profile rather than stored. The dropdown operators walk the
//! level list, tracking where the eventual projectum drops.

use serde::{Deserialize, Serialize};

use crate::arena::{Arena, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    J,
    MS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtFlavor {
    J,
    MsType1,
    MsType2,
    MsType3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtenderInfo {
    pub cr: Token,
    pub nu: Token,
    pub lambda: Token,
    pub lh: Token,
    pub flavor: ExtFlavor,
    pub nu_is_limit_of_generators: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub height: Token,
    pub active: Option<ExtenderInfo>,
    /// Weakly decreasing `[rho_1, ..., rho_k]`; `rho_omega` is the last entry.
    pub projecta: Vec<Token>,
    pub lgcd: Token,
}

impl Level {
    /// `rho_n` with `n = 0` meaning the height and degrees past the list
    /// length collapsing to `rho_omega`.
    pub fn rho(&self, n: Degree) -> Token {
        match n {
            Degree::Fin(0) => self.height,
            Degree::Fin(k) => {
                let i = (k as usize - 1).min(self.projecta.len() - 1);
                self.projecta[i]
            }
            Degree::Omega => *self.projecta.last().unwrap(),
        }
    }

    pub fn rho_omega(&self) -> Token {
        *self.projecta.last().unwrap()
    }
}

/// Degrees of soundness / ultrapowers: a small natural or omega.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degree {
    Fin(u32),
    Omega,
}

impl Degree {
    pub fn succ(self) -> Degree {
        match self {
            Degree::Fin(k) => Degree::Fin(k + 1),
            Degree::Omega => Degree::Omega,
        }
    }
}

impl PartialOrd for Degree {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Degree {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (Degree::Fin(a), Degree::Fin(b)) => a.cmp(b),
            (Degree::Fin(_), Degree::Omega) => std::cmp::Ordering::Less,
            (Degree::Omega, Degree::Fin(_)) => std::cmp::Ordering::Greater,
            (Degree::Omega, Degree::Omega) => std::cmp::Ordering::Equal,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PremouseError {
    #[error("{0} is not a level height of the table")]
    NotALevel(String),
    #[error("the designated level is passive")]
    PassiveLevel,
    #[error("table is structurally invalid: {0}")]
    Invalid(String),
}

/// Reference to an initial segment `M|xi` of a table, by its cut height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub cut_height: Token,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelTable {
    pub flavor: Flavor,
    pub levels: Vec<Level>,
    /// Soundness metadata for tree bases; structural data does not derive it.
    pub msound: Option<Degree>,
}

impl LevelTable {
    pub fn top(&self) -> &Level {
        self.levels.last().expect("level table is never empty")
    }

    /// `OR^M`.
    pub fn height(&self) -> Token {
        self.top().height
    }

    pub fn is_active(&self) -> bool {
        self.top().active.is_some()
    }

    pub fn top_extender(&self) -> Option<&ExtenderInfo> {
        self.top().active.as_ref()
    }

    pub fn level_index_at(&self, xi: Token) -> Option<usize> {
        self.levels.iter().position(|l| l.height == xi)
    }

    pub fn level_at(&self, xi: Token) -> Option<&Level> {
        self.levels.iter().find(|l| l.height == xi)
    }

    /// `M|xi`: prefix of the table up to and including the level at `xi`.
    pub fn segment(&self, xi: Token) -> Result<LevelTable, PremouseError> {
        let idx = self
            .level_index_at(xi)
            .ok_or_else(|| PremouseError::NotALevel(format!("{xi:?}")))?;
        Ok(LevelTable {
            flavor: self.flavor,
            levels: self.levels[..=idx].to_vec(),
            msound: None,
        })
    }

    /// `M||xi`: like `segment` but with the top extender removed.
    pub fn segment_passive(&self, xi: Token) -> Result<LevelTable, PremouseError> {
        let mut seg = self.segment(xi)?;
        seg.levels.last_mut().unwrap().active = None;
        Ok(seg)
    }

    /// The passive version `M^pv` of the table itself.
    pub fn passive(&self) -> LevelTable {
        let mut t = self.clone();
        t.levels.last_mut().unwrap().active = None;
        t.msound = None;
        t
    }

    /// Whether `xi` is an `M`-cardinal: no proper level `N` of `M` has
    /// `rho_omega^N < xi <= OR^N`.
    pub fn is_cardinal(&self, arena: &Arena, xi: Token) -> bool {
        self.levels[..self.levels.len() - 1].iter().all(|l| {
            !(arena.lt(l.rho_omega(), xi) && arena.le(xi, l.height))
        })
    }

    /// `(xi^+)^M`: least level height above `xi` whose level has
    /// `rho_omega <= xi`, else `OR^M`.
    pub fn plus_of(&self, arena: &Arena, xi: Token) -> Token {
        for l in &self.levels {
            if arena.lt(xi, l.height) && arena.le(l.rho_omega(), xi) {
                return l.height;
            }
        }
        self.height()
    }

    /// `(xi^+)` computed from the proper levels only: the least height of a
    /// level strictly below the top that lies above `xi` and projects at or
    /// below `xi`, or `None` when no proper level does. Used for the domain
    /// of an extender: subsets of the critical point coded by the exit's own
    /// top level are definable from the extender, not measured by it.
    pub fn proper_plus_of(&self, arena: &Arena, xi: Token) -> Option<Token> {
        self.levels[..self.levels.len() - 1]
            .iter()
            .find(|l| arena.lt(xi, l.height) && arena.le(l.rho_omega(), xi))
            .map(|l| l.height)
    }

    /// `iota(M) = max(nu(F^M), lgcd(M))`.
    pub fn iota(&self, arena: &Arena) -> Result<Token, PremouseError> {
        let f = self.top_extender().ok_or(PremouseError::PassiveLevel)?;
        Ok(arena.max(f.nu, self.top().lgcd))
    }

    /// All extenders on the extended sequence `E_+(M)`: the active
    /// extenders of segments of `M`, including `F^M` when present.
    pub fn extended_sequence(&self) -> Vec<ExtenderInfo> {
        self.levels.iter().filter_map(|l| l.active).collect()
    }

    /// Find the level whose active extender is `e` (matched by index `lh`).
    pub fn level_index_of_extender(&self, e: &ExtenderInfo) -> Option<usize> {
        self.levels
            .iter()
            .position(|l| l.active.map(|f| f.lh) == Some(e.lh))
    }

    /// Mod-dropdown of `(M, N)` for `N <| M` active, as level indices in
    /// ascending order (`N` first, `M` last).
    pub fn mod_dropdown(&self, arena: &Arena, n_height: Token) -> Result<Vec<usize>, PremouseError> {
        let start = self
            .level_index_at(n_height)
            .ok_or_else(|| PremouseError::NotALevel(format!("{n_height:?}")))?;
        if self.levels[start].active.is_none() {
            return Err(PremouseError::PassiveLevel);
        }
        let top = self.levels.len() - 1;
        let mut seq = vec![start];
        let mut cur = start;
        while cur != top {
            let cur_rho = self.levels[cur].rho_omega();
            let next = (cur + 1..top)
                .find(|&q| arena.lt(self.levels[q].rho_omega(), cur_rho))
                .unwrap_or(top);
            seq.push(next);
            cur = next;
        }
        Ok(seq)
    }

    /// Reverse-e-dropdown of `(M, E)` where `E` is the active extender of
    /// `N <| M`: the qualifying `F^{N_i}` in order of decreasing index, so
    /// the last entry is `E` itself. Returns `(level index, extender)` pairs.
    pub fn rev_e_dropdown(
        &self,
        arena: &Arena,
        e: &ExtenderInfo,
    ) -> Result<Vec<(usize, ExtenderInfo)>, PremouseError> {
        let n_idx = self
            .level_index_of_extender(e)
            .ok_or_else(|| PremouseError::NotALevel(format!("lh {:?}", e.lh)))?;
        let dd = self.mod_dropdown(arena, self.levels[n_idx].height)?;
        let mut picked: Vec<(usize, ExtenderInfo)> = Vec::new();
        for (i, &li) in dd.iter().enumerate() {
            let Some(f) = self.levels[li].active else { continue };
            if i > 0 {
                let prev_rho = self.levels[dd[i - 1]].rho_omega();
                if !arena.lt(f.nu, prev_rho) {
                    continue;
                }
            }
            picked.push((li, f));
        }
        picked.reverse();
        Ok(picked)
    }

    /// `M^+-`: truncate at `(nu^+)^M` and activate the trivial completion of
    /// `F^M` restricted to `nu`, as a type-3 top.
    pub fn squash(&self, arena: &Arena) -> Result<LevelTable, PremouseError> {
        let f = *self.top_extender().ok_or(PremouseError::PassiveLevel)?;
        if f.flavor == ExtFlavor::MsType3 {
            return Ok(self.clone());
        }
        let p = self.plus_of(arena, f.nu);
        let mut levels: Vec<Level> = self
            .levels
            .iter()
            .filter(|l| arena.lt(l.height, p))
            .cloned()
            .collect();
        // The squashed top's projecta list is the tail of the original one:
        // degree n over the squash corresponds to degree n+1 over the
        // original model, so rho_n of the squash is rho_{n+1} of the model.
        // A singleton list has no tail to shift into and is kept.
        let top = self.top();
        let projecta = if top.projecta.len() >= 2 {
            top.projecta[1..].to_vec()
        } else {
            top.projecta.clone()
        };
        levels.push(Level {
            height: p,
            active: Some(ExtenderInfo {
                cr: f.cr,
                nu: f.nu,
                // The lambda field of a trivial completion is not consumed by
                // any operation; it is pinned to nu for type-3 tops.
                lambda: f.nu,
                lh: p,
                flavor: ExtFlavor::MsType3,
                nu_is_limit_of_generators: f.nu_is_limit_of_generators,
            }),
            projecta,
            lgcd: f.nu,
        });
        Ok(LevelTable {
            flavor: Flavor::MS,
            levels,
            msound: None,
        })
    }

    /// Structural validity: height order, projecta shape, extender token
    /// order, and the per-flavor indexing constraints.
    pub fn validate(&self, arena: &Arena) -> Result<(), PremouseError> {
        if self.levels.is_empty() {
            return Err(PremouseError::Invalid("no levels".into()));
        }
        for w in self.levels.windows(2) {
            if !arena.lt(w[0].height, w[1].height) {
                return Err(PremouseError::Invalid("heights not strictly increasing".into()));
            }
        }
        for l in &self.levels {
            if l.projecta.is_empty() {
                return Err(PremouseError::Invalid("empty projecta".into()));
            }
            for w in l.projecta.windows(2) {
                if arena.lt(w[0], w[1]) {
                    return Err(PremouseError::Invalid("projecta not weakly decreasing".into()));
                }
            }
            for &r in &l.projecta {
                if arena.lt(l.height, r) {
                    return Err(PremouseError::Invalid("projectum above height".into()));
                }
            }
            if let Some(f) = &l.active {
                if !(arena.lt(f.cr, f.nu) && arena.le(f.nu, f.lambda) && arena.lt(f.lambda, f.lh)) {
                    return Err(PremouseError::Invalid("extender tokens out of order".into()));
                }
                if !arena.le(l.projecta[0], f.nu) {
                    return Err(PremouseError::Invalid("rho_1 above nu of active level".into()));
                }
                match f.flavor {
                    ExtFlavor::J => {
                        if f.lh != l.height {
                            return Err(PremouseError::Invalid("J extender not indexed at its height".into()));
                        }
                        if l.lgcd != f.lambda {
                            return Err(PremouseError::Invalid("J active level lgcd != lambda".into()));
                        }
                    }
                    ExtFlavor::MsType3 => {
                        if l.lgcd != f.nu {
                            return Err(PremouseError::Invalid("type-3 level lgcd != nu".into()));
                        }
                    }
                    _ => {}
                }
                if self.flavor == Flavor::J && f.flavor != ExtFlavor::J {
                    return Err(PremouseError::Invalid("MS extender on a J table".into()));
                }
            }
        }
        Ok(())
    }

    /// Tokens appearing anywhere in the table, deduplicated, ascending.
    pub fn support(&self, arena: &Arena) -> Vec<Token> {
        let mut out: Vec<Token> = Vec::new();
        for l in &self.levels {
            out.push(l.height);
            out.push(l.lgcd);
            out.extend(l.projecta.iter().copied());
            if let Some(f) = &l.active {
                out.extend([f.cr, f.nu, f.lambda, f.lh]);
            }
        }
        out.sort_by_key(|t| arena.rank(*t));
        out.dedup();
        out
    }
}

/// Outcome of `check_rev_e_dd_interleaving`: which chain variant held at
/// each link of the dropdown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterleavingReport {
    pub links: Vec<ChainVariant>,
    pub prefix_stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainVariant {
    LambdaEqualsRho,
    LambdaAboveSegment,
}

/// Verify the ordinal chains and prefix stability of the dropdown of
/// `(M, E)`. A violation signals an invalid fixture or an engine bug.
pub fn check_rev_e_dd_interleaving(
    arena: &Arena,
    m: &LevelTable,
    e: &ExtenderInfo,
) -> Result<InterleavingReport, PremouseError> {
    let dd = m.rev_e_dropdown(arena, e)?;
    let base_idx = m.level_index_of_extender(e).unwrap();
    let mod_dd = m.mod_dropdown(arena, m.levels[base_idx].height)?;

    let mut links = Vec::new();
    for i in 0..dd.len().saturating_sub(1) {
        let (li, ei) = dd[i];
        let (li1, ei1) = dd[i + 1];
        // N' = largest mod-dropdown element strictly below M|lh(E_i).
        let np = *mod_dd
            .iter()
            .filter(|&&q| q < li)
            .max()
            .ok_or_else(|| PremouseError::Invalid("no mod-dropdown element below".into()))?;
        let rho_np = m.levels[np].rho_omega();
        let or_np = m.levels[np].height;
        let rho_seg = m.levels[li1].rho_omega();
        let common = arena.le(rho_np, rho_seg)
            && arena.le(rho_seg, ei1.nu)
            && arena.le(ei1.nu, ei1.lambda)
            && arena.lt(ei1.lambda, ei1.lh)
            && arena.le(ei1.lh, or_np);
        let v1 = arena.lt(ei.nu, ei.lambda)
            && ei.lambda == rho_np
            && common
            && arena.lt(or_np, ei.lh);
        let v2 = arena.lt(ei.nu, rho_np)
            && common
            && arena.lt(or_np, ei.lambda)
            && arena.lt(ei.lambda, ei.lh);
        if v1 {
            links.push(ChainVariant::LambdaEqualsRho);
        } else if v2 {
            links.push(ChainVariant::LambdaAboveSegment);
        } else {
            return Err(PremouseError::Invalid(format!(
                "dropdown chain violated between entries {i} and {}",
                i + 1
            )));
        }
    }

    let mut prefix_stable = true;
    for i in 0..dd.len() {
        let sub = m.rev_e_dropdown(arena, &dd[i].1)?;
        if sub != dd[..=i] {
            prefix_stable = false;
        }
    }
    if !prefix_stable {
        return Err(PremouseError::Invalid("dropdown prefix property violated".into()));
    }

    Ok(InterleavingReport { links, prefix_stable })
}

// Wire format: token names as strings, arena shipped as an ordered name list.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireExtender {
    pub cr: String,
    pub nu: String,
    pub lambda: String,
    pub lh: String,
    pub flavor: ExtFlavor,
    #[serde(default)]
    pub nu_is_limit_of_generators: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireLevel {
    pub height: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<WireExtender>,
    pub projecta: Vec<String>,
    pub lgcd: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireTable {
    pub flavor: Flavor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msound: Option<Degree>,
    pub arena: Vec<String>,
    pub levels: Vec<WireLevel>,
}

impl LevelTable {
    pub fn to_wire(&self, arena: &Arena) -> WireTable {
        let nm = |t: Token| arena.name(t).to_string();
        WireTable {
            flavor: self.flavor,
            msound: self.msound,
            arena: arena.to_names(),
            levels: self
                .levels
                .iter()
                .map(|l| WireLevel {
                    height: nm(l.height),
                    active: l.active.map(|f| WireExtender {
                        cr: nm(f.cr),
                        nu: nm(f.nu),
                        lambda: nm(f.lambda),
                        lh: nm(f.lh),
                        flavor: f.flavor,
                        nu_is_limit_of_generators: f.nu_is_limit_of_generators,
                    }),
                    projecta: l.projecta.iter().map(|&t| nm(t)).collect(),
                    lgcd: nm(l.lgcd),
                })
                .collect(),
        }
    }

    /// Rebuilds the arena and the table from the wire form.
    pub fn from_wire(wire: &WireTable) -> Result<(Arena, LevelTable), PremouseError> {
        let arena = Arena::from_names(&wire.arena)
            .map_err(|e| PremouseError::Invalid(e.to_string()))?;
        let tok = |s: &str| -> Result<Token, PremouseError> {
            arena
                .lookup(s)
                .ok_or_else(|| PremouseError::Invalid(format!("unknown token name {s:?}")))
        };
        let mut levels = Vec::new();
        for wl in &wire.levels {
            let active = match &wl.active {
                None => None,
                Some(wf) => Some(ExtenderInfo {
                    cr: tok(&wf.cr)?,
                    nu: tok(&wf.nu)?,
                    lambda: tok(&wf.lambda)?,
                    lh: tok(&wf.lh)?,
                    flavor: wf.flavor,
                    nu_is_limit_of_generators: wf.nu_is_limit_of_generators,
                }),
            };
            levels.push(Level {
                height: tok(&wl.height)?,
                active,
                projecta: wl.projecta.iter().map(|s| tok(s)).collect::<Result<_, _>>()?,
                lgcd: tok(&wl.lgcd)?,
            });
        }
        let table = LevelTable {
            flavor: wire.flavor,
            levels,
            msound: wire.msound,
        };
        table.validate(&arena)?;
        Ok((arena, table))
    }
}
