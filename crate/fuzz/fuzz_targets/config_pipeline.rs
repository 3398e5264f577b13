#![no_main]

use delayed_branching::{censored_mean_matrices, evolve_means, parse_config, solve_malthusian, validate};
use libfuzzer_sys::fuzz_target;

// Anything that parses must flow through the analysis without panicking;
// domain errors are fine.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = parse_config(text) else { return };
    if cfg.model.n_types() > 8 || cfg.model.delays.max_delay() > 32 {
        return;
    }
    let _ = validate(&cfg.model);
    let Ok(family) = censored_mean_matrices(&cfg.model) else {
        return;
    };
    let Ok(mal) = solve_malthusian(&family, 1e-10) else {
        return;
    };
    let _ = evolve_means(&cfg.model, &family, 64, mal.theta);
});
