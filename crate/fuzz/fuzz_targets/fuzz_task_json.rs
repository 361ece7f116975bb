#![no_main]
use floppynet::control::TaskSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = TaskSpec::from_json_str(text) {
        let _ = spec.into_task(None);
    }
});
