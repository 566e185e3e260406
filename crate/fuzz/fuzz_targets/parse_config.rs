#![no_main]

use libfuzzer_sys::fuzz_target;
use tangle_sim::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = parse_config(text) {
            // Anything accepted must survive a manifest round trip.
            let again = parse_config(&spec.to_manifest()).expect("manifest reparses");
            assert_eq!(again.to_manifest(), spec.to_manifest());
        }
    }
});
