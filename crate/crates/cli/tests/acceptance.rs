//! Acceptance suite. Each criterion is one test and prints one PASS/FAIL line.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtreelab::cex::{self, Chain};
use rtreelab::exec::Exec;
use rtreelab::freegrp::{ReducedWord, SubgroupGraph};
use rtreelab::gog::{self, apply_move, fixtures as gfx, FoldMove, GogError, GraphOfGroups, MorphismSpec};
use rtreelab::isosys::{fixtures as ifx, LeafTag, MachineStatus, SystemType};
use rtreelab::mtree;
use rtreelab::scalar::Scalar;

/// Writes past the test harness capture so the line shows on passing runs too.
fn verdict(n: usize, title: &str, failures: &[String], elapsed: Duration) {
    let line = if failures.is_empty() {
        format!("criterion {n}: PASS  {title} ({:.2}s)\n", elapsed.as_secs_f64())
    } else {
        format!("criterion {n}: FAIL  {title} ({:.2}s): {}\n", elapsed.as_secs_f64(), failures.join("; "))
    };
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(failures.is_empty(), "criterion {n}: {}", failures.join("; "));
}

fn within(failures: &mut Vec<String>, start: Instant, limit: u64) {
    if start.elapsed() > Duration::from_secs(limit) {
        failures.push(format!("took {:.1}s, limit {limit}s", start.elapsed().as_secs_f64()));
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn w(s: &str) -> ReducedWord {
    s.parse().unwrap()
}

#[test]
fn criterion_1_exact_counterexample_values() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut chain = Chain::build(9);
    let (b, c) = (w("b"), w("c"));
    let mut extent_misses = Vec::new();
    for k in 0..=8 {
        let s = cex::spine_metrics(k);
        if s.distance != Scalar::one() {
            failures.push(format!("spine distance at k={k} is {}", s.distance));
        }
        match cex::translation_length(&mut chain, &b, &c, k) {
            Ok(t) if t == Scalar::from_integer(2) => {}
            Ok(t) => failures.push(format!("translation length at k={k} is {t}")),
            Err(e) => failures.push(format!("translation length at k={k}: {e}")),
        }
        for i in 1..k {
            let bi = chain.b(i);
            let expected = &Scalar::one() - &Scalar::dyadic(i as u32 + 1);
            match cex::fixed_extent(&mut chain, &bi, k) {
                Ok(x) if x == expected => {}
                Ok(x) => extent_misses.push(format!("(i={i},k={k}) got {x} want {expected}")),
                Err(e) => extent_misses.push(format!("(i={i},k={k}) {e}")),
            }
        }
    }
    if !extent_misses.is_empty() {
        failures.push(format!(
            "fixed_extent(b_i,k) != 1-1/2^(i+1) in {} cases, first {}",
            extent_misses.len(),
            extent_misses[0]
        ));
    }
    within(&mut failures, start, 10);
    verdict(1, "spine distance 1, translation length 2, fixed extents", &failures, start.elapsed());
}

#[test]
fn criterion_2_chain_algebra() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let chain = Chain::build(5);
    for i in 2..=4 {
        match cex::verify_malnormal_step(&chain, i) {
            Ok(s) if s.malnormal => {}
            Ok(s) => failures.push(format!("M_{i} not malnormal in M_{}: {:?}", i - 1, s.direct.witness)),
            Err(e) => failures.push(format!("level {i}: {e}")),
        }
    }
    let r = cex::verify_intersection(5, 10, Exec::default());
    if !r.exceptions.is_empty() || !r.holds {
        failures.push(format!("{} intersection exceptions, first {:?}", r.exceptions.len(), r.exceptions.first()));
    }
    within(&mut failures, start, 60);
    verdict(2, "malnormal steps 2..4, intersection N=5 L=10", &failures, start.elapsed());
}

#[test]
fn criterion_3_freegrp_oracle() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let subgroups: Vec<Vec<common::Word>> = (0..50).map(|_| common::random_generators(&mut rng, 2, 3, 6)).collect();
    let words = common::all_words(2, 8);
    let graphs: Vec<SubgroupGraph> = subgroups
        .iter()
        .map(|g| SubgroupGraph::stallings(2, &g.iter().map(|x| w(&common::to_string(x))).collect::<Vec<_>>()))
        .collect();
    let balls: Vec<_> = subgroups.iter().map(|g| common::subgroup_ball(g, 8)).collect();
    let parsed: Vec<ReducedWord> = words.iter().map(|x| w(&common::to_string(x))).collect();
    let mut checks = 0usize;
    for j in 0..subgroups.len() {
        let k = (j + 1) % subgroups.len();
        let meet = graphs[j].intersect(&graphs[k]);
        for (x, rx) in words.iter().zip(&parsed) {
            checks += 2;
            if graphs[j].member(rx) != balls[j].contains(x) {
                failures.push(format!("member {} in {:?}", common::to_string(x), subgroups[j]));
            }
            if meet.member(rx) != (balls[j].contains(x) && balls[k].contains(x)) {
                failures.push(format!("intersect {} in {:?} and {:?}", common::to_string(x), subgroups[j], subgroups[k]));
            }
        }
    }
    failures.truncate(5);
    let title = format!("member/intersect agree with enumeration ({checks} checks)");
    verdict(3, &title, &failures, start.elapsed());
}

/// Sorted vertex-group and edge-group bases; equal for isomorphic graphs of groups.
fn shape(g: &GraphOfGroups) -> (usize, Vec<Vec<String>>, Vec<Vec<String>>) {
    let basis = |h: &SubgroupGraph| {
        let mut b: Vec<String> = h.basis().iter().map(|x| x.to_string()).collect();
        b.sort();
        b
    };
    let mut vs: Vec<_> = g.vertices.iter().map(|v| basis(&v.group)).collect();
    let mut es: Vec<_> = g.edges.iter().map(|e| basis(&e.group)).collect();
    vs.sort();
    es.sort();
    (g.betti(), vs, es)
}

fn check_decomposition(name: &str, spec: &MorphismSpec, needs: fn(&FoldMove) -> bool, failures: &mut Vec<String>) {
    let d = match gog::fold_decompose(spec, 64) {
        Ok(d) => d,
        Err(e) => return failures.push(format!("{name}: {e}")),
    };
    if !d.isomorphic {
        failures.push(format!("{name}: replay not isomorphic: {:?}", d.mismatch));
    }
    let mut g = spec.source.clone();
    let mut prev = g.monitor();
    for m in &d.moves {
        let (next, cert) = match apply_move(&g, &m.mv) {
            Ok(x) => x,
            Err(e) => return failures.push(format!("{name}: replaying {:?}: {e}", m.mv)),
        };
        let mon = next.monitor();
        if mon.betti > prev.betti || mon.w_count > prev.w_count {
            failures.push(format!("{name}: {:?} raised betti/w_count", m.mv));
        }
        if matches!(m.mv, FoldMove::Fold { .. }) && !(cert.holds && m.certificate.holds) {
            failures.push(format!("{name}: fold without a verified (*) certificate"));
        }
        g = next;
        prev = mon;
    }
    if shape(&g) != shape(&spec.target) {
        failures.push(format!("{name}: replayed graph differs from target"));
    }
    if !d.moves.iter().any(|m| needs(&m.mv)) {
        failures.push(format!("{name}: expected move kind missing"));
    }
}

#[test]
fn criterion_4_fold_calculus() {
    let start = Instant::now();
    let mut failures = Vec::new();
    check_decomposition("pure collapse", &gfx::pure_collapse(), |m| matches!(m, FoldMove::Collapse { .. }), &mut failures);
    check_decomposition("pure fold", &gfx::pure_fold(), |m| matches!(m, FoldMove::Fold { .. }), &mut failures);
    check_decomposition("mixed", &gfx::mixed_group_fold(), |m| matches!(m, FoldMove::GroupFold { .. }), &mut failures);
    within(&mut failures, start, 5);
    verdict(4, "fold decompositions replay to target, monotone, (*) certified", &failures, start.elapsed());
}

#[test]
fn criterion_5_scott_pipeline() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let (levels, maps) = gfx::folding_pipeline();
    match gog::scott_pipeline(&levels, &maps) {
        Ok(t) => match t.limit {
            Some(lim) => {
                let g0 = &levels[0].graph;
                let mut image = g0.edges[0].group.clone();
                for m in &maps {
                    image = image.image(&m.phi, g0.rank);
                }
                let limit = SubgroupGraph::stallings(g0.rank, &lim.group);
                if limit != image || !lim.equals_image_of_source {
                    failures.push(format!("limit edge group {:?} is not the image of the level-0 edge group", lim.group));
                }
            }
            None => failures.push("no stable limit".into()),
        },
        Err(e) => failures.push(format!("free-splitting pipeline: {e}")),
    }
    let (levels, maps) = gfx::broken_pipeline();
    match gog::scott_pipeline(&levels, &maps) {
        Err(GogError::MonotonicityViolation { witness: Some(_), .. }) => {}
        other => failures.push(format!("broken pipeline gave {other:?}")),
    }
    verdict(5, "limit edge group is the image of the level-0 edge; (*) violation caught", &failures, start.elapsed());
}

#[test]
fn criterion_6_rips_machine_and_leaf_spaces() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let single = ifx::single_band();
    let out = single.rips_run(100).unwrap();
    let class = single.classify(100, 200).unwrap();
    if out.status != MachineStatus::HaltEmpty || class.kind != SystemType::Simplicial {
        failures.push(format!("single band: {:?}, {:?}", out.status, class.kind));
    }
    for (name, s) in [("rational", ifx::rational_exchange()), ("golden", ifx::golden_exchange())] {
        let out = s.rips_run(100).unwrap();
        if out.status != MachineStatus::Pure {
            failures.push(format!("{name} exchange: machine {:?}", out.status));
        }
        if !out.system.multiplicity_profile().unwrap().constant_off_breakpoints(2) {
            failures.push(format!("{name} exchange: multiplicity is not 2 off breakpoints"));
        }
        let class = s.classify(100, 200).unwrap();
        if class.kind != SystemType::Surface {
            failures.push(format!("{name} exchange classified {:?}, expected SURFACE", class.kind));
        }
    }
    let orbit = ifx::golden_exchange().orbit(&Scalar::zero(), 200).unwrap();
    match &orbit.min_gap {
        Some(g) if g < &Scalar::from_ratio(1, 100) => {}
        g => failures.push(format!("golden orbit min gap {g:?} not below 1/100")),
    }
    let l = ifx::circle().leaf_space_graph(200).unwrap();
    if l.betti != 1 || l.total_length != Scalar::from_ratio(1, 2) {
        failures.push(format!("circle: betti {}, length {}", l.betti, l.total_length));
    }
    let tags: Vec<LeafTag> =
        ifx::two_component().imanishi_components(200).unwrap().components.iter().map(|c| c.tag).collect();
    if tags != [LeafTag::CompactLeaves, LeafTag::DenseLeaves] {
        failures.push(format!("two components tagged {tags:?}"));
    }
    within(&mut failures, start, 10);
    verdict(6, "machine halts, exchanges pure, orbit gaps, leaf spaces, Imanishi tags", &failures, start.elapsed());
}

#[test]
fn criterion_7_mtree_constructions() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let four_point = |name: &str, t: &mtree::MetricTree, failures: &mut Vec<String>| {
        if !mtree::check_four_point(t).unwrap() {
            failures.push(format!("{name} fails the four-point condition"));
        }
    };
    let tripod = mtree::parse_tree_json(&std::fs::read_to_string(fixture("tripod.json")).unwrap()).unwrap();
    let fam = tripod.family.as_ref().unwrap();
    let s = mtree::skeleton(fam).unwrap();
    if (s.v0.len(), s.v1.len(), s.edges.len()) != (1, 3, 3) {
        failures.push(format!("tripod skeleton has {} V0, {} V1, {} edges", s.v0.len(), s.v1.len(), s.edges.len()));
    }
    four_point("tripod skeleton", &s.as_metric_tree().unwrap(), &mut failures);
    let mut collapses = 0;
    for name in ["tripod.json", "split_segment.json"] {
        let inst = mtree::parse_tree_json(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
        four_point(name, &inst.tree, &mut failures);
        let fam = inst.family.as_ref().unwrap();
        for mask in 0u32..(1 << fam.members.len()) {
            let kill: Vec<usize> = (0..fam.members.len()).filter(|i| mask & (1 << i) != 0).collect();
            let (target, map) = mtree::collapse(fam, &kill).unwrap();
            let a = map.check_alignment(&target);
            if !a.aligned || !a.surjective {
                failures.push(format!("{name} kill {kill:?}: alignment {a:?}"));
            }
            four_point(&format!("{name} collapse {kill:?}"), &target, &mut failures);
            collapses += 1;
        }
    }
    let title = format!("tripod skeleton 1/3/3, {collapses} collapses aligned, four-point everywhere");
    verdict(7, &title, &failures, start.elapsed());
}

const COMMANDS: &[&[&str]] = &[
    &["group", "fold", "--sub", "a,babb"],
    &["group", "fold", "--sub", "a,babb", "--dot"],
    &["group", "member", "--sub", "a,babb", "--word", "b"],
    &["group", "intersect", "--sub", "a,babb", "--other", "ab,bab"],
    &["group", "malnormal", "--sub", "aa,b"],
    &["tree", "check", "tripod.json"],
    &["tree", "check", "tripod.json", "--dot"],
    &["tree", "skeleton", "tripod.json"],
    &["tree", "skeleton", "tripod.json", "--dot"],
    &["tree", "collapse", "split_segment.json"],
    &["tree", "collapse", "tripod.json", "--dot"],
    &["isosys", "profile", "golden.json"],
    &["isosys", "run", "golden.json", "--max-steps", "100"],
    &["isosys", "run", "single_band.json"],
    &["isosys", "orbit", "golden.json", "--x", "0"],
    &["isosys", "classify", "two_component.json"],
    &["isosys", "classify", "axial.json"],
    &["isosys", "leafspace", "reflection.json"],
    &["isosys", "leafspace", "single_band.json", "--dot"],
    &["gog", "validate", "star.json"],
    &["gog", "monitor", "star.json", "--dot"],
    &["gog", "fold", "mixed_fold.json"],
    &["gog", "fold", "mixed_fold.json", "--dot"],
    &["gog", "scott", "folding_pipeline.json"],
    &["gog", "scott", "folding_pipeline.json", "--csv"],
    &["gog", "scott", "broken_pipeline.json"],
    &["cex", "chain", "3"],
    &["cex", "malnormal", "3"],
    &["cex", "intersection", "3", "6"],
    &["cex", "gamma", "3"],
    &["cex", "gamma", "2", "--dot"],
    &["cex", "spine", "--k", "5"],
    &["cex", "extent", "babb", "4"],
    &["cex", "lengths", "b", "c", "4", "--csv"],
];

#[test]
fn criterion_8_cli_determinism() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let dir = fixture("");
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_rtreelab")).args(args).current_dir(&dir).output().expect("binary runs")
    };
    for args in COMMANDS {
        let (first, second) = (run(args), run(args));
        if !first.status.success() {
            failures.push(format!("{} exited {:?}", args.join(" "), first.status.code()));
        }
        if first.stdout != second.stdout || first.status.code() != second.status.code() {
            failures.push(format!("{} differs between runs", args.join(" ")));
        }
        if first.stdout.is_empty() {
            failures.push(format!("{} printed nothing", args.join(" ")));
        }
    }
    let title = format!("{} commands byte-identical across runs", COMMANDS.len());
    verdict(8, &title, &failures, start.elapsed());
}
