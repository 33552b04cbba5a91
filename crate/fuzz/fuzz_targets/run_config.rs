#![no_main]

use glass_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse(text) {
        let echoed = cfg.resolved().expect("valid config serializes");
        let again = RunConfig::parse(&echoed).expect("echo parses");
        assert_eq!(again.resolved().expect("serializes"), echoed);
    }
});
