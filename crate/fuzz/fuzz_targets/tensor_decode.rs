#![no_main]

use libfuzzer_sys::fuzz_target;
use pga_core::store::Tensor;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Tensor::from_bytes(data) {
        // the layout has no padding, so a successful decode re-encodes exactly
        assert_eq!(t.to_bytes().unwrap(), data);
    }
    let _ = Tensor::from_bytes_allow_non_finite(data);
});
