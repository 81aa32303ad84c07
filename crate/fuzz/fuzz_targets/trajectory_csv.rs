#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = igeh::io::parse_trajectory_csv(text) {
        let again = igeh::io::parse_trajectory_csv(&igeh::io::write_trajectory_csv(&rows)).expect("written table parses");
        assert_eq!(again, rows);
    }
});
