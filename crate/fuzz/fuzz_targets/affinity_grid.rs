#![no_main]

use gcl::io::{parse_affinity_grid, write_affinity_grid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(aff) = parse_affinity_grid(text) {
        let again = parse_affinity_grid(&write_affinity_grid(&aff)).expect("written grid must parse");
        assert_eq!(again, aff);
    }
});
