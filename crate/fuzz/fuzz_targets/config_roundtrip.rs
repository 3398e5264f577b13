#![no_main]

use delayed_branching::config::model_to_json;
use delayed_branching::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = parse_config(text) else { return };
    let written = model_to_json(&cfg.model, &cfg.run);
    let back = parse_config(&written).expect("written config parses");
    assert_eq!(back.model, cfg.model);
    assert_eq!(back.run, cfg.run);
    assert_eq!(model_to_json(&back.model, &back.run), written);
});
