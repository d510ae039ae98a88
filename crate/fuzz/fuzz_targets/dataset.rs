#![no_main]

use gcl::io::{parse_dataset, write_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(data) = parse_dataset(text) {
        assert_eq!(parse_dataset(&write_dataset(&data)).unwrap(), data);
    }
});
