//! Seeded random generation of premice.
//!
//! Tables are built from "towers": maximal runs of consecutive active levels
//! whose extender data interleave the way a reverse dropdown sequence
//! requires (heights increasing and nu decreasing upward, the projectum of
//! each stage sitting above the nu of the stage after it). Each tower is
//! minted in two passes over a strictly growing arena: a low pass for the
//! small field tokens (critical points, nus, extra projecta, and optional
//! successor-witness levels) and a high pass for lambdas and heights.
//! Passive filler levels that project to their own height may separate
//! towers; they never participate in dropdowns.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use crate::arena::{Arena, Token};
use crate::premouse::{ExtFlavor, ExtenderInfo, Flavor, Level, LevelTable};

/// The deterministic RNG used everywhere a seed appears in the interface.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mint(arena: &mut Arena, tag: &str) -> Token {
    let name = arena.unique_name(&format!("{tag}{}", arena.len()));
    arena.fresh_top(&name).expect("fresh name")
}

struct StageLow {
    cr: Token,
    nu: Token,
    rho2: Option<Token>,
    /// Height of an optional passive level projecting to cr, giving cr a
    /// nontrivial successor inside the table.
    witness: Option<Token>,
}

/// Append one tower of `stages` active levels to `levels`, returning the
/// height of the tower's top level.
fn push_tower<R: Rng>(
    arena: &mut Arena,
    rng: &mut R,
    levels: &mut Vec<Level>,
    stages: usize,
    flavor: Flavor,
) -> Token {
    // Low pass, top stage first: every small token of a stage is minted
    // after the nu of the stage above it, which yields exactly the ordering
    // the dropdown chain conditions ask for.
    let mut lows: Vec<StageLow> = Vec::new();
    for _ in 0..stages {
        let rho2 = rng.gen_bool(0.3).then(|| mint(arena, "o"));
        // Critical points must stay cardinals of the segment they will live
        // in: a reused token is only admissible when no level built so far
        // (and no pending witness interval) collapses it, and a successor
        // witness is only legal over a fresh critical point, since for a
        // reused one the interval (cr, witness] would swallow tokens of
        // other stages.
        let reused = if rng.gen_bool(0.35) && arena.len() > 1 {
            let pick = rng.gen_range(0..arena.len() - 1);
            let t = arena.ordered()[pick];
            let collapsed = levels
                .iter()
                .any(|l| arena.lt(l.rho_omega(), t) && arena.le(t, l.height))
                || lows.iter().any(|s| {
                    s.witness
                        .is_some_and(|w| arena.lt(s.cr, t) && arena.le(t, w))
                });
            (!collapsed).then_some(t)
        } else {
            None
        };
        let (cr, witness) = match reused {
            Some(t) => (t, None),
            None => {
                let cr = mint(arena, "o");
                let witness = rng.gen_bool(0.5).then(|| mint(arena, "o"));
                (cr, witness)
            }
        };
        let nu = mint(arena, "o");
        lows.push(StageLow { cr, nu, rho2, witness });
    }
    for low in &lows {
        if let Some(w) = low.witness {
            levels.push(Level {
                height: w,
                active: None,
                projecta: vec![low.cr],
                lgcd: low.cr,
            });
        }
    }
    // Stage order from the bottom of the tower up.
    lows.reverse();

    // High pass, bottom stage first.
    let mut prev_rho_omega: Option<Token> = None;
    let mut top = None;
    for low in &lows {
        // Above the bottom stage, lambda must either reuse the projectum of
        // the stage below (token equality) or sit above that stage's height;
        // lambda = nu is only legal at the bottom.
        let lambda = match prev_rho_omega {
            Some(r) if rng.gen_bool(0.5) => r,
            Some(_) => mint(arena, "o"),
            None if rng.gen_bool(0.4) => low.nu,
            None => mint(arena, "o"),
        };
        let h = mint(arena, "o");
        let mut projecta = vec![low.nu];
        if rng.gen_bool(0.25) {
            projecta.push(low.nu);
        }
        if let Some(r) = low.rho2 {
            projecta.push(r);
        }
        prev_rho_omega = Some(*projecta.last().unwrap());
        // MS-flavored levels are indexed the same way in the skeleton but
        // carry a type-1/2 tag and have nu as their largest cardinal; the
        // limit-of-generators flag (genuine type 3) is never generated, so
        // type-3 structure in MS trees arises only through squashing.
        let (ext_flavor, lgcd, nu_lim) = match flavor {
            Flavor::J => (ExtFlavor::J, lambda, lambda == low.nu),
            Flavor::MS => (
                if rng.gen_bool(0.5) { ExtFlavor::MsType1 } else { ExtFlavor::MsType2 },
                low.nu,
                false,
            ),
        };
        levels.push(Level {
            height: h,
            active: Some(ExtenderInfo {
                cr: low.cr,
                nu: low.nu,
                lambda,
                lh: h,
                flavor: ext_flavor,
                nu_is_limit_of_generators: nu_lim,
            }),
            projecta,
            lgcd,
        });
        top = Some(h);
    }
    top.expect("tower has at least one stage")
}

/// A random J-flavored premouse over (usually fresh) `arena`, spending at
/// most `budget` new tokens. With `active_top` the table is guaranteed to
/// end in an active level.
pub fn random_j_premouse<R: Rng>(
    arena: &mut Arena,
    rng: &mut R,
    budget: usize,
    active_top: bool,
) -> LevelTable {
    random_premouse(arena, rng, budget, active_top, Flavor::J)
}

/// A random MS-flavored premouse with type-1/2 active levels.
pub fn random_ms_premouse<R: Rng>(
    arena: &mut Arena,
    rng: &mut R,
    budget: usize,
    active_top: bool,
) -> LevelTable {
    random_premouse(arena, rng, budget, active_top, Flavor::MS)
}

fn random_premouse<R: Rng>(
    arena: &mut Arena,
    rng: &mut R,
    budget: usize,
    active_top: bool,
    flavor: Flavor,
) -> LevelTable {
    let budget = budget.max(4);
    let limit = arena.len() + budget;
    let mut levels: Vec<Level> = Vec::new();

    loop {
        let room = limit.saturating_sub(arena.len());
        if room < 4 && !levels.is_empty() {
            break;
        }
        // A stage costs at most 5 tokens (rho2, cr, witness, nu, height)
        // plus one for a fresh lambda.
        let max_stages = (room / 5).max(1).min(3);
        let stages = rng.gen_range(1..=max_stages);
        push_tower(arena, rng, &mut levels, stages, flavor);

        let room = limit.saturating_sub(arena.len());
        if room == 0 {
            break;
        }
        if rng.gen_bool(0.3) {
            let f = mint(arena, "o");
            levels.push(Level { height: f, active: None, projecta: vec![f], lgcd: f });
        }
        if room < 4 || rng.gen_bool(0.5) {
            break;
        }
    }

    if !active_top && levels.last().map(|l| l.active.is_some()) == Some(true) {
        let f = mint(arena, "o");
        let projecta = if rng.gen_bool(0.5) && arena.len() > 1 {
            let pick = rng.gen_range(0..arena.len() - 1);
            vec![f, arena.ordered()[pick]]
        } else {
            vec![f]
        };
        levels.push(Level { height: f, active: None, projecta, lgcd: f });
    }
    if active_top {
        while levels.last().map(|l| l.active.is_none()) == Some(true) {
            levels.pop();
        }
    }

    LevelTable { flavor, levels, msound: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::premouse::check_rev_e_dd_interleaving;

    #[test]
    fn generated_premice_validate() {
        for seed in 0..200u64 {
            let mut rng = seeded_rng(seed);
            let mut arena = Arena::new();
            let t = random_j_premouse(&mut arena, &mut rng, 16, seed % 2 == 0);
            t.validate(&arena)
                .unwrap_or_else(|e| panic!("seed {seed}: {e:?}"));
            assert!(!t.levels.is_empty());
            if seed % 2 == 0 {
                assert!(t.is_active());
            }
        }
    }

    #[test]
    fn generated_dropdowns_satisfy_the_chain_conditions() {
        let mut nontrivial = 0usize;
        for seed in 0..200u64 {
            let mut rng = seeded_rng(seed);
            let mut arena = Arena::new();
            let t = random_j_premouse(&mut arena, &mut rng, 20, true);
            for lvl in &t.levels {
                let Some(f) = lvl.active else { continue };
                let dd = t.rev_e_dropdown(&arena, &f).unwrap();
                assert_eq!(dd.last().map(|x| x.1), Some(f));
                for w in dd.windows(2) {
                    assert!(arena.lt(w[1].1.lh, w[0].1.lh), "lh not decreasing");
                    assert!(arena.lt(w[0].1.nu, w[1].1.nu), "nu not increasing");
                }
                let report = check_rev_e_dd_interleaving(&arena, &t, &f)
                    .unwrap_or_else(|e| panic!("seed {seed}: {e:?}"));
                assert!(report.prefix_stable);
                if dd.len() >= 2 {
                    nontrivial += 1;
                }
            }
        }
        assert!(nontrivial >= 100, "only {nontrivial} nontrivial dropdowns");
    }

    #[test]
    fn generation_is_deterministic() {
        for seed in [0u64, 7, 99] {
            let mut a1 = Arena::new();
            let t1 = random_j_premouse(&mut a1, &mut seeded_rng(seed), 16, true);
            let mut a2 = Arena::new();
            let t2 = random_j_premouse(&mut a2, &mut seeded_rng(seed), 16, true);
            assert_eq!(a1.to_names(), a2.to_names());
            assert_eq!(t1, t2);
        }
    }
}
