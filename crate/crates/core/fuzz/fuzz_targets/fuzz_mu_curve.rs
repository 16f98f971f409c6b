#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(curve) = greenwave::rates::MuCurve::parse_csv(text, 1.0) {
            // Lookups over a parsed curve must never index out of range.
            for t in [-1.0e9, -1.0, 0.0, 0.49, 1.0, 7.3, 1.0e9] {
                let _ = curve.lookup(t);
            }
        }
    }
});
