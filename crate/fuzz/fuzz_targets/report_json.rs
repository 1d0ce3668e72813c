#![no_main]

use libfuzzer_sys::fuzz_target;
use pga_core::pipeline::{report_from_json, report_to_csv, report_to_json, report_to_svg};

fuzz_target!(|data: &str| {
    if let Ok(r) = report_from_json(data) {
        let _ = report_to_csv(&r);
        let _ = report_to_svg(&r);
        if let Ok(json) = report_to_json(&r) {
            let back = report_from_json(&json).unwrap();
            assert_eq!(report_to_json(&back).unwrap(), json);
        }
    }
});
