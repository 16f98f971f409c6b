#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // Any input must either parse or fail with a structured error; the
        // round trip of a successful parse must be stable.
        if let Ok(batches) = greenwave::flowmodel::parse_observations(text, 8) {
            let csv = greenwave::flowmodel::observations_to_csv(&batches);
            let again = greenwave::flowmodel::parse_observations(&csv, 8)
                .expect("re-serialized stream must parse");
            assert_eq!(again, batches);
        }
    }
});
