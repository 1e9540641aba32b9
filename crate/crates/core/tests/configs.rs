use std::fs;
use std::path::Path;

use auction_covering::scenario::ScenarioConfig;

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ScenarioConfig::load(&path).unwrap();
            let again = ScenarioConfig::from_toml(&cfg.to_toml().unwrap(), "round trip").unwrap();
            assert_eq!(again.to_toml().unwrap(), cfg.to_toml().unwrap(), "{}", path.display());
            assert_eq!(cfg.mechanism().unwrap().n(), cfg.dists().len());
            count += 1;
        }
    }
    assert!(count >= 6);
}
