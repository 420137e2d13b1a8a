//! Shared numeric formatting for emitted tables.

/// C-style `%.6e`: six fraction digits and a signed exponent of at least
/// two digits, e.g. `1.234560e+06`.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.6e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", e.abs())
}

/// `x` as it reads back from [`sci`].
pub fn round6(x: f64) -> f64 {
    if x.is_finite() {
        sci(x).parse().expect("sci output parses")
    } else {
        x
    }
}

/// Comma-separated table with a header line and `%.6e` cells.
pub fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| sci(*x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
