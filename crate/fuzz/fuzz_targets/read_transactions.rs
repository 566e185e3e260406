#![no_main]

use libfuzzer_sys::fuzz_target;
use tangle_sim::io::{read_transactions, write_transactions};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_transactions(data) {
        let mut buf = Vec::new();
        write_transactions(&mut buf, &rows).expect("write to memory");
        assert_eq!(read_transactions(buf.as_slice()).expect("reread"), rows);
    }
});
