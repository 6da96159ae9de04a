//! Shipped scenario files and configuration round-trips.

use std::path::Path;

use proptest::prelude::*;
use shockform::scenario::{ScenarioConfig, STOCK_SCENARIOS};
use shockform::sweep::SweepParameter;

fn scenario_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

#[test]
fn shipped_files_match_the_stock_builders() {
    for name in STOCK_SCENARIOS {
        let file = ScenarioConfig::load(scenario_dir().join(format!("{name}.toml"))).unwrap();
        assert_eq!(file, ScenarioConfig::stock(name).unwrap(), "{name}");
        file.validate().unwrap();
    }
}

#[test]
fn every_shipped_file_is_a_stock_scenario() {
    let mut names: Vec<String> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut stock: Vec<String> = STOCK_SCENARIOS.iter().map(|s| s.to_string()).collect();
    stock.sort();
    assert_eq!(names, stock);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parse_serialize_parse_is_identity(
        which in 0usize..4,
        kappa in 0.01f64..0.2,
        eps in 1e-4f64..1e-2,
        nu in 16usize..1024,
        dt in 1e-4f64..0.05,
    ) {
        let base = ScenarioConfig::stock(STOCK_SCENARIOS[which]).unwrap();
        let mut cfg = SweepParameter::Kappa.apply(&base, kappa).unwrap();
        cfg = SweepParameter::EpsRipple.apply(&cfg, eps).unwrap();
        cfg = SweepParameter::Nu.apply(&cfg, nu as f64).unwrap();
        cfg = SweepParameter::Dt.apply(&cfg, dt).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml_string().unwrap(), text);
    }
}
