#![no_main]

use gcl::io::parse_metrics;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = parse_metrics(text);
});
