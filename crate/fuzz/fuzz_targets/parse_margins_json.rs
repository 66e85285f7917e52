#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = lapfield::io::parse_margins_json(s) {
            let t = m.tail;
            let x = t.threshold_u + 1.0;
            let _ = t.cdf(x, 10.0);
        }
    }
});
