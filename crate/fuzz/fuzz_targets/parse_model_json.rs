#![no_main]
use libfuzzer_sys::fuzz_target;

use lapfield::covariance::SiteSet;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(file) = lapfield::io::parse_model_json(s) else {
        return;
    };
    // An accepted spec must build a model on a small site set.
    let sites = SiteSet::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![[0.0, 0.0], [10.0, 0.0], [0.0, 25.0]],
        vec![0.0, 5.0, 40.0],
    )
    .unwrap();
    let _ = file.model(sites);
});
