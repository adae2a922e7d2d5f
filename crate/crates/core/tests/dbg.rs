use treecalc_core::gen::{random_j_premouse, seeded_rng};
use treecalc_core::jconv::*;
use treecalc_core::tree::{random_tree, IterationTree, Rules};
use treecalc_core::ultrapower::ult_by_sequence;
use treecalc_core::Arena;

#[test]
fn dbg_g() {
    let seed: u64 = std::env::var("DBG_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(15);
    let mut rng = seeded_rng(seed);
    let mut arena = Arena::new();
    let base = random_j_premouse(&mut arena, &mut rng, 20, false);
    let pre = random_tree(arena, base, &mut rng, 4, Rules::JMax).unwrap();
    let t = unravel(&pre).unwrap();
    let u = convert(&t).unwrap();
    let last = t.len() - 1;
    let eps1 = |s: &IterationTree| -> usize {
        let b = s.branch(last);
        let mut pos = 1;
        for (i, &x) in b.iter().enumerate().skip(2) {
            if s.nodes[x].dropped { pos = i; }
        }
        b[pos]
    };
    let (te1, ue1) = (eps1(&t), eps1(&u));
    println!("te1={te1} ue1={ue1}");
    let tails = |s: &IterationTree, from: usize| {
        let b = s.branch(last);
        let p = b.iter().position(|&x| x == from).unwrap();
        b[p..].iter().filter(|&&x| x != 0 && s.nodes[x - 1].exit.is_some())
            .map(|&x| {
                let e = s.nodes[x - 1].exit.unwrap();
                (e, s.nodes[x - 1].model.segment(e.lh).unwrap())
            }).collect::<Vec<_>>()
    };
    let ft = tails(&t, te1);
    let fu = tails(&u, ue1);
    let anchor = t.branch(last).into_iter()
        .skip_while(|&x| x != te1)
        .find(|&x| t.nodes[x].m_star.is_some()).unwrap();
    let nstar = t.nodes[anchor].m_star.as_ref().unwrap();
    let deg = t.nodes[te1].degree;
    println!("nstar levels={} deg={:?} ft={} fu={}", nstar.levels.len(), deg, ft.len(), fu.len());
    for (i, l) in nstar.levels.iter().enumerate() {
        println!("nstar L{i} h={} rho={:?} active={}", t.arena.name(l.height),
            l.projecta.iter().map(|&p| t.arena.name(p).to_string()).collect::<Vec<_>>(),
            l.active.map(|f| format!("cr={}", t.arena.name(f.cr))).unwrap_or_default());
    }
    for (e, _) in &ft {
        println!("ft e cr={} nu={} lh={}", t.arena.name(e.cr), t.arena.name(e.nu), t.arena.name(e.lh));
    }
    for (e, _) in &fu {
        println!("fu e cr={} nu={} lh={}", u.arena.name(e.cr), u.arena.name(e.nu), u.arena.name(e.lh));
    }
    let mut a1 = u.arena.clone();
    let mut a2 = u.arena.clone();
    {
        let (e, ex) = &ft[0];
        let cp = ex.proper_plus_of(&a1, e.cr);
        println!("step1: crplus_exit={:?}", cp.map(|h| a1.name(h).to_string()));
        for (i, l) in ex.levels.iter().enumerate() {
            println!("exit L{i} h={} rho={:?}", a1.name(l.height),
                l.projecta.iter().map(|&p| a1.name(p).to_string()).collect::<Vec<_>>());
        }
        let rd = treecalc_core::ultrapower::resolve_drop(&a1, nstar, deg, e.cr, cp);
        println!("resolve_drop: {:?}", rd.as_ref().map(|(n, d, dr)| (n.levels.len(), *d, *dr)));
    }
    let r1 = ult_by_sequence(&mut a1, nstar, deg, &ft).expect("T side");
    let r2 = ult_by_sequence(&mut a2, nstar, deg, &fu).expect("U side");
    println!("r1 deg={:?} drops={:?} levels={}", r1.degree, r1.drops, r1.model.levels.len());
    println!("r2 deg={:?} drops={:?} levels={}", r2.degree, r2.drops, r2.model.levels.len());
    for (tag, a, m) in [("r1", &a1, &r1.model), ("r2", &a2, &r2.model)] {
        for (i, l) in m.levels.iter().enumerate() {
            println!("{tag} L{i} h={} rho={:?} active={}", a.name(l.height),
                l.projecta.iter().map(|&p| a.name(p).to_string()).collect::<Vec<_>>(),
                l.active.map(|f| format!("cr={} nu={} lh={}", a.name(f.cr), a.name(f.nu), a.name(f.lh))).unwrap_or_default());
        }
    }
    let bn = base_names(&t);
    let iso = treecalc_core::iso::table_iso(&a1, &r1.model, &a2, &r2.model, &bn);
    println!("iso={}", iso.is_some());
    if let Some(iso) = iso {
        println!("it maps: {:?} {:?}", r1.iteration_map.is_some(), r2.iteration_map.is_some());
        if let (Some(m1), Some(m2)) = (&r1.iteration_map, &r2.iteration_map) {
            for (&x, &y) in &m1.map {
                if let Some(x2) = iso.get(x) {
                    if let Some(&y2) = m2.map.get(&x2) {
                        if iso.get(y) != Some(y2) {
                            println!("disagree at {}: {} vs {}", a1.name(x), a1.name(y), a2.name(y2));
                        }
                    }
                }
            }
        }
        if let (Some(b1), Some(b2)) = (&r1.bar_map, &r2.bar_map) {
            println!("bar maps present");
            for (&x, &y) in &b1.map {
                if let Some(x2) = iso.get(x) {
                    if let Some(&y2) = b2.map.get(&x2) {
                        if iso.get(y) != Some(y2) {
                            println!("bar disagree at {}: {} vs {}", a1.name(x), a1.name(y), a2.name(y2));
                        }
                    }
                }
            }
        } else {
            println!("bar maps: {:?} {:?}", r1.bar_map.is_some(), r2.bar_map.is_some());
        }
    }
}

#[test]
fn dbg_lift0() {
    let mut rng = seeded_rng(0);
    let mut arena = Arena::new();
    let base = random_j_premouse(&mut arena, &mut rng, 20, false);
    let up = random_tree(arena, base, &mut rng, 4, Rules::LiftingMsMax).unwrap();
    println!("U' len={} eta={:?}", up.len(), up.eta);
    for i in 0..up.len() {
        let n = &up.nodes[i];
        println!("U'[{}] pred={:?} exit={} dropped={} deg={:?}",
            i, n.pred,
            n.exit.map(|e| format!("cr={} nu={} lh={}", up.arena.name(e.cr), up.arena.name(e.nu), up.arena.name(e.lh))).unwrap_or_default(),
            n.dropped, n.degree);
    }
    let (t, v) = invert(&up).unwrap();
    println!("T len={} eta={:?}", t.len(), t.eta);
    for i in 0..t.len() {
        let n = &t.nodes[i];
        println!("T[{}] pred={:?} exit={} label={} dropped={}",
            i, n.pred,
            n.exit.map(|e| format!("cr={} nu={} lh={}", t.arena.name(e.cr), t.arena.name(e.nu), t.arena.name(e.lh))).unwrap_or_default(),
            n.label.map(|e| format!("cr={} nu={} lh={}", t.arena.name(e.cr), t.arena.name(e.nu), t.arena.name(e.lh))).unwrap_or_default(),
            n.dropped);
    }
    let ord = ext_order(&t).unwrap();
    println!("direct={:?}", ord.direct);
    for a in 0..t.len() {
        if t.nodes[a].exit.is_some() {
            println!("support({a})={:?} vs={} tilde={:?}", ord.support(a), t.is_very_special(a), tilde(&t, a));
        }
    }
    println!("V len={} eta={:?}", v.len(), v.eta);
    for i in 0..v.len() {
        let n = &v.nodes[i];
        println!("V[{}] pred={:?} exit={} dropped={}",
            i, n.pred,
            n.exit.map(|e| format!("cr={} nu={} lh={}", v.arena.name(e.cr), v.arena.name(e.nu), v.arena.name(e.lh))).unwrap_or_default(),
            n.dropped);
    }
}

#[test]
fn dbg_j0() {
    let seed: u64 = std::env::var("DBG_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rng = seeded_rng(seed);
    let mut arena = Arena::new();
    let base = random_j_premouse(&mut arena, &mut rng, 20, false);
    let pre = random_tree(arena, base, &mut rng, 4, Rules::JMax).unwrap();
    let t = unravel(&pre).unwrap();
    println!("T len={} eta={:?}", t.len(), t.eta);
    for i in 0..t.len() {
        let n = &t.nodes[i];
        println!("T[{}] pred={:?} exit={} label={} dropped={} deg={:?}",
            i, n.pred,
            n.exit.map(|e| format!("cr={} nu={} lh={}", t.arena.name(e.cr), t.arena.name(e.nu), t.arena.name(e.lh))).unwrap_or_default(),
            n.label.map(|e| format!("cr={} nu={} lh={}", t.arena.name(e.cr), t.arena.name(e.nu), t.arena.name(e.lh))).unwrap_or_default(),
            n.dropped, n.degree);
    }
    let ord = ext_order(&t).unwrap();
    println!("direct={:?}", ord.direct);
    for a in 0..t.len() - 1 {
        if t.nodes[a].exit.is_some() {
            let c = core_ext(&t, a);
            println!("slot {a}: support={:?} vs={} tilde={:?} core_cr={:?}", ord.support(a), t.is_very_special(a), tilde(&t, a),
                c.map(|c| t.arena.name(c.cr).to_string()));
        }
    }
    let u = convert(&t).unwrap();
    for i in 0..u.len() {
        let n = &u.nodes[i];
        println!("U[{}] pred={:?} exit={} dropped={} deg={:?}",
            i, n.pred,
            n.exit.map(|e| format!("cr={} nu={} lh={}", u.arena.name(e.cr), u.arena.name(e.nu), u.arena.name(e.lh))).unwrap_or_default(),
            n.dropped, n.degree);
    }
    let rep = check_conversion_contract(&t, &u);
    for r in &rep.records {
        println!("{} ok={} {}", r.clause, r.ok, r.detail);
    }
}
