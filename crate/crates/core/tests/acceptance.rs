//! One PASS/FAIL line per acceptance criterion, at full tolerances.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::BTreeMap;

use soliton_lab::runner::{run_scenario, Criterion, ScenarioConfig};

const RUNS: &[&str] = &[
    "scenario = verify-residuals\nseed = 11\n[audit]\nn = 2048\nwidths = 40\nevolve_three_d_b = true\nevolve_T = 20\n",
    "scenario = soliton-propagation\n[params]\nM = 1\nm = 0.5\nv = 1\n[soliton]\nfamily = OneD_B\nx0 = -20\n\
     [grid]\nn = 4096\nlength = 80\n[run]\nT = 20\n[checks]\nscheme = true\nscheme_n = 256\nreverse_T = 10\n",
    "scenario = free-spreading\n[soliton]\nfamily = OneD_B\n[grid]\nn = 2048\nlength = 80\n[run]\nT = 20\n\
     [free]\nn = 8192\nlength = 400\n",
    "scenario = yukawa-oracle\nseed = 5\n[oracle]\nn1 = 128\nn3 = 32\n",
    "scenario = choquard-stationary\n[params]\nM = 1\nm = 1\nv = 0.816496580927726\n[soliton]\nfamily = OneD_B\n\
     [grid]\nn = 1024\nlength = 80\n[run]\nT = 50\n",
    "scenario = perturbation-stability\nseed = 42\n[soliton]\nfamily = OneD_B\n[grid]\nn = 2048\nlength = 80\n\
     [run]\nT = 20\nmode = coupled\n[perturbation]\nkind = amplitude_noise\nstrength = 0.01\n",
];

#[test]
fn acceptance_criteria() {
    let mut by_id: BTreeMap<u8, Vec<Criterion>> = BTreeMap::new();
    for text in RUNS {
        let cfg = ScenarioConfig::parse(text).expect("acceptance config parses");
        let report = run_scenario(&cfg).unwrap_or_else(|e| panic!("{} aborted: {e}", cfg.scenario));
        for f in &report.findings {
            println!("finding ({}): {f}", cfg.scenario);
        }
        for c in report.criteria {
            by_id.entry(c.id).or_default().push(c);
        }
    }
    let mut failed = Vec::new();
    for id in 1..=10u8 {
        match by_id.get(&id) {
            Some(list) => {
                for c in list {
                    println!("{}", c.line());
                    if !c.passed {
                        failed.push(id);
                    }
                }
            }
            None => {
                println!("criterion {id:>2} [FAIL] not evaluated");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
