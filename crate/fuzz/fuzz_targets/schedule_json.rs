#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(schedule) = igeh::io::parse_schedule_json(text) {
        let again = igeh::io::parse_schedule_json(&igeh::io::schedule_to_json(&schedule)).expect("written schedule parses");
        assert_eq!(again, schedule);
        // evaluation stays within the clamp for any admissible schedule
        for tau in [0.0, 0.5, 10.0, 1e6] {
            assert!(schedule.at(tau).abs() < 1.0);
        }
    }
});
