use std::path::Path;

use iab_core::campaign::{derive_seed, run_dir, Axes, Campaign, GridPoint, INDEX_FILE};
use iab_core::engine::run_with_seed;
use iab_core::metrics::{write_bundle, LINKS_FILE, PACKETS_FILE, SUMMARY_FILE};
use iab_core::scenario::builtin_topology;

fn base() -> iab_core::scenario::Scenario {
    let mut s = builtin_topology(3).unwrap();
    s.simulation.duration_s = 0.02;
    s
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push((e.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&e).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn single_point_matches_direct_run() {
    let s = base();
    let c = Campaign::new(s.clone(), vec![GridPoint::default()], 1).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    c.execute(Some(tmp.path())).unwrap();

    let seed = derive_seed(s.simulation.seed, &GridPoint::default(), 0);
    let direct = tempfile::tempdir().unwrap();
    write_bundle(direct.path(), &run_with_seed(&s, seed).unwrap(), 0).unwrap();
    let d = run_dir(tmp.path(), &GridPoint::default(), 0);
    for f in [LINKS_FILE, PACKETS_FILE, SUMMARY_FILE] {
        assert_eq!(std::fs::read(d.join(f)).unwrap(), std::fs::read(direct.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn grid_cardinality_and_repeatability() {
    let axes = Axes { rain_mmh: vec![0.0, 15.0, 30.0], ..Default::default() };
    let c = Campaign::new(base(), axes.points(), 2).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let results = c.execute(Some(a.path())).unwrap();
    c.execute(Some(b.path())).unwrap();
    assert_eq!(results.len(), 6);
    let bundles = walk(a.path()).iter().filter(|p| p.ends_with(SUMMARY_FILE)).count();
    assert_eq!(bundles, 6);
    assert!(a.path().join(INDEX_FILE).exists());
    assert_eq!(read_all(a.path()), read_all(b.path()));
    let mut seeds: Vec<u64> = results.iter().map(|r| r.seed).collect();
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), 6);
}

#[test]
fn grid_file_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = tmp.path().join("s.toml");
    base().save(&scen).unwrap();
    let grid = tmp.path().join("grid.toml");
    std::fs::write(&grid, "scenario = \"s.toml\"\nruns = 3\n[axes]\nn_s_odd = [4, 6, 8]\nmux = [\"tdm\"]\n").unwrap();
    let c = Campaign::load(&grid).unwrap();
    assert_eq!(c.runs, 3);
    assert_eq!(c.points.len(), 3);
    assert_eq!(c.points[2].label(), "tdm_ns8");

    std::fs::write(&grid, "topology = 2\n[axes]\nrain = [1]\n").unwrap();
    assert!(Campaign::load(&grid).is_err());
    std::fs::write(&grid, "runs = 1\n").unwrap();
    assert!(Campaign::load(&grid).is_err());
}
