#![no_main]

use gcl::io::{parse_trials, write_trials};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(trials) = parse_trials(text) {
        assert_eq!(parse_trials(&write_trials(&trials)).unwrap(), trials);
    }
});
