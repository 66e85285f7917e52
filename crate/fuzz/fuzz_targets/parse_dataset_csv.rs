#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(d) = lapfield::io::parse_dataset_csv(s) {
            // Retained rows are complete and finite.
            for row in d.rows() {
                assert_eq!(row.len(), d.n_sites());
                assert!(row.iter().all(|v| v.is_finite()));
            }
        }
    }
});
