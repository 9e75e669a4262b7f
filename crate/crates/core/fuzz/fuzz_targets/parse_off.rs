#![no_main]
use evostefan::geometry::{off_string, parse_off};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = parse_off(text) {
        // anything accepted must survive a write/read cycle
        let again = parse_off(&off_string(&mesh)).expect("written OFF reparses");
        assert_eq!(again.num_vertices(), mesh.num_vertices());
        assert_eq!(again.triangles(), mesh.triangles());
    }
});
