#![no_main]

use bubblelab_bench::config::SuiteManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = SuiteManifest::from_toml_str(text) {
        for c in &m.checks {
            assert!(m.get(&c.id).is_some());
        }
    }
});
