#![no_main]

use libfuzzer_sys::fuzz_target;
use pga_core::store::ReadoutDescriptor;

fuzz_target!(|data: &str| {
    if let Ok(d) = ReadoutDescriptor::from_json_str(data) {
        assert_eq!(d.ln_gamma.is_some(), d.ln_beta.is_some());
        let again = serde_json::to_string(&d).unwrap();
        assert_eq!(ReadoutDescriptor::from_json_str(&again).unwrap(), d);
    }
});
