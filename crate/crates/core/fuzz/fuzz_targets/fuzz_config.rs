#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let mut config = greenwave::config::ExperimentConfig::default();
        if config.apply_file_text(text).is_ok() {
            // Whatever parsed must serialize and re-parse cleanly.
            let rendered = config.to_file_text();
            let mut again = greenwave::config::ExperimentConfig::default();
            again.apply_file_text(&rendered).expect("rendered config must parse");
        }
    }
});
