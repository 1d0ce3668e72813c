#![no_main]

use libfuzzer_sys::fuzz_target;
use pga_core::store::BundleManifest;

fuzz_target!(|data: &str| {
    if let Ok(m) = BundleManifest::from_json_str(data) {
        let files = m.layer_files().unwrap();
        assert_eq!(files.len(), m.num_layers + 1);
        let again = serde_json::to_string(&m).unwrap();
        assert_eq!(BundleManifest::from_json_str(&again).unwrap(), m);
    }
});
