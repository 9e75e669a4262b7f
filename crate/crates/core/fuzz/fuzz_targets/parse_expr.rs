#![no_main]
use evostefan::expr::{Expr, Point};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = Expr::parse(text) {
        let p = Point::new(0.3, [0.6, 0.0, 0.8]);
        let _ = e.eval(&p);
        let _ = e.derivative(evostefan::expr::Var::X).eval(&p);
    }
});
