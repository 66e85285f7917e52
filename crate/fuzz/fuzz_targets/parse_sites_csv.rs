#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(sites) = lapfield::io::parse_sites_csv(s) {
            assert_eq!(sites.ids().len(), sites.covariate().len());
            assert!(!sites.is_empty());
        }
    }
});
