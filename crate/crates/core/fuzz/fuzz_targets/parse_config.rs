#![no_main]
use evostefan::harness::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ScenarioConfig::parse(text) {
        let back = ScenarioConfig::parse(&cfg.to_toml()).expect("serialized config reparses");
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
});
