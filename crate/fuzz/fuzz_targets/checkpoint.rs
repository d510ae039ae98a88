#![no_main]

use gcl::io::{parse_checkpoint, write_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(ckpt) = parse_checkpoint(text) {
        assert_eq!(parse_checkpoint(&write_checkpoint(&ckpt)).unwrap(), ckpt);
    }
});
