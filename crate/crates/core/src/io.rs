//! CSV output with one header row and `%.12e` numbers.

use std::io::Write;

/// Formats like C's `%.12e`: twelve fraction digits and a signed, two-digit exponent.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn write_csv<W: Write, R>(out: W, header: &[&str], rows: R) -> std::io::Result<()>
where
    R: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| sci(x)))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printf_style() {
        assert_eq!(sci(0.0), "0.000000000000e+00");
        assert_eq!(sci(-1234.5), "-1.234500000000e+03");
        assert_eq!(sci(2.5e-7), "2.500000000000e-07");
        assert_eq!(sci(1e100), "1.000000000000e+100");
    }

    #[test]
    fn single_header_row() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["t", "x"], vec![vec![0.0, 1.0], vec![0.5, -2.0]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,x\n0.000000000000e+00,1.000000000000e+00\n5.000000000000e-01,-2.000000000000e+00\n");
    }
}
