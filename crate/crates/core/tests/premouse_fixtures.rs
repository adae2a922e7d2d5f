use treecalc_core::premouse::*;
use treecalc_core::Arena;

fn load(name: &str) -> (Arena, LevelTable) {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    let wire: WireTable = serde_json::from_str(&text).unwrap();
    LevelTable::from_wire(&wire).unwrap()
}

#[test]
fn segment_identity_and_prefix() {
    let (_a, p2) = load("p2.json");
    let m = p2.segment(p2.height()).unwrap();
    assert_eq!(m.levels, p2.levels);

    let h0 = p2.levels[0].height;
    let n0 = p2.segment(h0).unwrap();
    assert_eq!(n0.levels.len(), 1);
    assert_eq!(n0.levels[0], p2.levels[0]);
    assert_eq!(n0.segment(h0).unwrap().levels, n0.levels);
}

#[test]
fn cardinals_single_level() {
    let (a, p1) = load("p1.json");
    for &t in a.ordered() {
        if a.lt(t, p1.height()) {
            assert!(p1.is_cardinal(&a, t));
        }
    }
}

#[test]
fn cardinals_p2() {
    let (a, p2) = load("p2.json");
    let nu0 = a.lookup("nu0").unwrap();
    let h0 = a.lookup("h0").unwrap();
    // rho_omega of the proper level N0 is nu0, so tokens in (nu0, h0] are
    // not cardinals and (nu0^+)^M = h0 = OR^{N0}.
    for &t in a.ordered() {
        let in_gap = a.lt(nu0, t) && a.le(t, h0);
        assert_eq!(p2.is_cardinal(&a, t), !in_gap, "token {}", a.name(t));
    }
    assert_eq!(p2.plus_of(&a, nu0), h0);
}

#[test]
fn iota_cases() {
    let (a, p1) = load("p1.json");
    // J flavor: lgcd = lambda >= nu, so iota = lambda.
    assert_eq!(p1.iota(&a).unwrap(), a.lookup("la").unwrap());

    let (a3, p3) = load("p3.json");
    assert_eq!(p3.iota(&a3), Err(PremouseError::PassiveLevel));
}

#[test]
fn mod_dropdown_cases() {
    let (a, p2) = load("p2.json");
    let hm = p2.height();
    assert_eq!(p2.mod_dropdown(&a, hm).unwrap(), vec![1]);
    let h0 = a.lookup("h0").unwrap();
    assert_eq!(p2.mod_dropdown(&a, h0).unwrap(), vec![0, 1]);

    let (a3, p3) = load("p3.json");
    let h0 = a3.lookup("h0").unwrap();
    assert_eq!(p3.mod_dropdown(&a3, h0).unwrap(), vec![0, 1, 2]);
}

#[test]
fn rev_e_dropdown_cases() {
    let (a, p1) = load("p1.json");
    let f = *p1.top_extender().unwrap();
    let dd = p1.rev_e_dropdown(&a, &f).unwrap();
    assert_eq!(dd, vec![(0, f)]);

    // P2 with nu(F^M) < rho_omega^{N0}: both extenders appear.
    let (a, p2) = load("p2.json");
    let f0 = p2.levels[0].active.unwrap();
    let fm = p2.levels[1].active.unwrap();
    let dd = p2.rev_e_dropdown(&a, &f0).unwrap();
    assert_eq!(dd, vec![(1, fm), (0, f0)]);

    // P2b with nu(F^M) >= rho_omega^{N0}: the top extender is filtered out.
    let (a, p2b) = load("p2b.json");
    let f0 = p2b.levels[0].active.unwrap();
    let dd = p2b.rev_e_dropdown(&a, &f0).unwrap();
    assert_eq!(dd.len(), 1);
    assert_eq!(dd[0].0, 0);
}

#[test]
fn interleaving_chains() {
    let (a, p1) = load("p1.json");
    let f = *p1.top_extender().unwrap();
    let r = check_rev_e_dd_interleaving(&a, &p1, &f).unwrap();
    assert!(r.links.is_empty() && r.prefix_stable);

    // P2's single link realizes the lambda-above-segment variant.
    let (a, p2) = load("p2.json");
    let f0 = p2.levels[0].active.unwrap();
    let r = check_rev_e_dd_interleaving(&a, &p2, &f0).unwrap();
    assert_eq!(r.links, vec![ChainVariant::LambdaAboveSegment]);

    // P3's link realizes lambda = rho_omega^{N'}.
    let (a, p3) = load("p3.json");
    let f0 = p3.levels[0].active.unwrap();
    let r = check_rev_e_dd_interleaving(&a, &p3, &f0).unwrap();
    assert_eq!(r.links, vec![ChainVariant::LambdaEqualsRho]);
}

#[test]
fn squash_p1() {
    let (a, p1) = load("p1.json");
    let s = p1.squash(&a).unwrap();
    // nu has no projecting level above it below the top, so (nu^+)^M = OR^M.
    assert_eq!(s.height(), p1.height());
    let top = s.top_extender().unwrap();
    assert_eq!(top.flavor, ExtFlavor::MsType3);
    assert_eq!(top.nu, a.lookup("nu").unwrap());
    assert_eq!(top.lambda, top.nu);
    assert_eq!(s.squash(&a).unwrap(), s);
}

#[test]
fn squash_p2_keeps_height() {
    let (a, p2) = load("p2.json");
    // N0 projects to nu0 > nuM, so no proper level witnesses (nuM^+)^M and
    // the squash keeps the full height.
    let s = p2.squash(&a).unwrap();
    assert_eq!(s.height(), p2.height());
    assert_eq!(s.levels.len(), 2);
    let top = s.top_extender().unwrap();
    assert_eq!(top.flavor, ExtFlavor::MsType3);
    assert_eq!(top.nu, a.lookup("nuM").unwrap());
    assert_eq!(top.lambda, top.nu);
    assert_eq!(s.squash(&a).unwrap(), s);
}

#[test]
fn squash_cuts_at_nu_plus() {
    let (a, p4) = load("p4.json");
    // The passive level at w projects to nu, so (nu^+)^M = w and the squash
    // cuts there, replacing that level with the trivial completion.
    let s = p4.squash(&a).unwrap();
    assert_eq!(s.height(), a.lookup("w").unwrap());
    assert_eq!(s.levels.len(), 1);
    let top = s.top_extender().unwrap();
    assert_eq!(top.flavor, ExtFlavor::MsType3);
    assert_eq!(top.nu, a.lookup("nu").unwrap());
    assert_eq!(top.lambda, top.nu);
    assert_eq!(top.lh, a.lookup("w").unwrap());
    assert_eq!(s.squash(&a).unwrap(), s);
}

#[test]
fn wire_round_trip() {
    for f in ["p1.json", "p2.json", "p2b.json", "p3.json", "p4.json"] {
        let (a, t) = load(f);
        let wire = t.to_wire(&a);
        let (a2, t2) = LevelTable::from_wire(&wire).unwrap();
        assert_eq!(a2.to_names(), a.to_names());
        assert_eq!(t2, t);
    }
}
