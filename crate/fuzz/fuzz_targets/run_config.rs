#![no_main]

use libfuzzer_sys::fuzz_target;
use pga_core::pipeline::RunConfig;

fuzz_target!(|data: &str| {
    if let Ok(c) = RunConfig::from_json_str(data) {
        let again = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json_str(&again).unwrap(), c);
    }
});
