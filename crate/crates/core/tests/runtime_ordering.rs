//! Kept in its own test binary so no other test competes for the CPU while
//! wall-clock times are recorded.

use std::io::Write;

use knn_mdp::dataset::{generate_synthetic, NamedFunction, SyntheticSpec, TargetColumn};
use knn_mdp::experiments::{run_real, RealDataConfig};
use knn_mdp::selection::Rule;

#[test]
fn discrepancy_rule_is_not_slower_than_gcv() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SyntheticSpec::new(NamedFunction::F2.into(), 0.2, 505, 17);
    spec.dimension = 4;
    let (ds, _) = generate_synthetic(&spec).unwrap();
    let path = dir.path().join("table.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "a,b,c,d,target").unwrap();
    for i in 0..ds.len() {
        let x = ds.point(i);
        writeln!(f, "{},{},{},{},{}", x[0], x[1], x[2], x[3], ds.responses()[i]).unwrap();
    }
    drop(f);

    let mut cfg = RealDataConfig::new(&path, TargetColumn::Name("target".into()));
    cfg.rules = vec![Rule::Mdp, Rule::Gcv];
    cfg.root_seed = 4;
    let report = run_real(&cfg).unwrap();
    for n in [70, 88, 118, 177, 354] {
        let mdp = report.row(Rule::Mdp, n).unwrap().mean_runtime_ns;
        let gcv = report.row(Rule::Gcv, n).unwrap().mean_runtime_ns;
        assert!(mdp <= gcv, "n = {n}: mdp {mdp} ns vs gcv {gcv} ns");
    }
}
