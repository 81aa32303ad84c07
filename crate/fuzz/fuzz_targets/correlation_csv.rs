#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(series) = igeh::io::parse_correlation_csv(text, "fuzz") {
        assert!(series.entries.windows(2).all(|w| w[0].tau < w[1].tau));
        let again = igeh::io::parse_correlation_csv(&igeh::io::write_correlation_csv(&series), "fuzz")
            .expect("written series parses");
        assert_eq!(again, series);
    }
});
