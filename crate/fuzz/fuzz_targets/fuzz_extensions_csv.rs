#![no_main]
use floppynet::loadpredict::read_extensions_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_extensions_csv(data) {
        assert!(rows.iter().all(|x| x.value.is_finite()));
    }
});
