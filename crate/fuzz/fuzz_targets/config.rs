#![no_main]

use gcl::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = RunConfig::parse(text) {
        let again = RunConfig::parse(&cfg.to_text()).expect("printed config must parse");
        assert_eq!(again, cfg);
    }
});
