#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(expr) = wellbem::expr::parse_expression(text) {
        // evaluation must not panic; the printed form must parse back to
        // the same tree
        let _ = expr.eval(0.3, -0.7);
        let printed = expr.to_text();
        let reparsed =
            wellbem::expr::parse_expression(&printed).expect("printed expression must parse");
        assert_eq!(reparsed, expr);
    }
});
