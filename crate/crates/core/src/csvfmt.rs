//! CSV number formatting shared by every table writer.

/// 17 significant digits, `.` decimal point; round-trips every finite f64.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // Normalizes -0.0 so replayed tables compare byte-equal.
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

/// Builds a CSV body from a header and rows of numbers.
pub fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for v in [0.1, -3.25e-300, 1.0 / 3.0, 6.02e23, -0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), if v == 0.0 { 0.0 } else { v });
        }
        assert_eq!(table(&["a", "b"], vec![vec![1.0, 2.0]]), "a,b\n1.0000000000000000e0,2.0000000000000000e0\n");
    }
}
