#![no_main]

use libfuzzer_sys::fuzz_target;
use tangle_sim::io::read_series;

fuzz_target!(|data: &[u8]| {
    if let Ok(points) = read_series(data) {
        assert!(points.windows(2).all(|w| w[0].time <= w[1].time));
    }
});
