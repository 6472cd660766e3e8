#![no_main]

use erem::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json_str(text) {
        let _ = cfg.resolve();
        let back = RunConfig::from_json_str(&cfg.to_json_string()).expect("serialized config reparses");
        assert_eq!(back.problem, cfg.problem);
    }
});
