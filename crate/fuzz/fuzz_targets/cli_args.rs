#![no_main]

use clap::Parser;
use delayed_branching::cli::Cli;
use libfuzzer_sys::fuzz_target;

// Arguments are NUL separated; only parsing is exercised.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let args = std::iter::once("dmbp").chain(text.split('\0'));
    let _ = Cli::try_parse_from(args);
});
