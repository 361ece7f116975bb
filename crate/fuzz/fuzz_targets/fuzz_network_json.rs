#![no_main]
use floppynet::Network;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = Network::from_json_str(text) {
        // anything accepted must survive a round trip unchanged
        let again = Network::from_json_str(&net.to_json()).expect("re-parse");
        assert_eq!(again, net);
    }
});
