//! Plain-text matrix format: a line holding `m`, then `m` rows of `m`
//! whitespace-separated entries written as `re{sign}imj` (e.g. `1.5-0.25j`).
//! Numbers use the shortest representation that round-trips.

use faer::{Mat, MatRef};
use num_complex::Complex64;

use super::HermitianMatrix;
use crate::error::{Error, Result};

pub fn format_complex(z: Complex64) -> String {
    if z.im.is_sign_negative() {
        format!("{}{}j", z.re, z.im)
    } else {
        format!("{}+{}j", z.re, z.im)
    }
}

/// Parses `re{sign}imj`; a bare real number is also accepted.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    let Some(body) = s.strip_suffix('j') else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    // The sign separating re and im is the last +/- not following an exponent marker
    // and not at position 0.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))?;
    let re = body[..split].parse::<f64>().ok()?;
    let im = body[split..].trim_start_matches('+').parse::<f64>().ok()?;
    Some(Complex64::new(re, im))
}

pub fn format_matrix(a: MatRef<'_, Complex64>) -> String {
    let mut out = format!("{}\n", a.nrows());
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format_complex(a[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the text format into a validated Hermitian matrix.
pub fn parse_matrix(text: &str) -> Result<HermitianMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let m: usize = header.parse().map_err(|_| Error::Parse {
        line: first,
        message: format!("expected dimension, got {header:?}"),
    })?;
    if m == 0 {
        return Err(Error::Parse {
            line: first,
            message: "dimension must be >= 1".into(),
        });
    }
    let mut mat = Mat::<Complex64>::zeros(m, m);
    for i in 0..m {
        let (ln, row) = lines.next().ok_or(Error::Parse {
            line: first + i + 1,
            message: format!("expected {m} rows, found {i}"),
        })?;
        let entries: Vec<&str> = row.split_whitespace().collect();
        if entries.len() != m {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected {m} entries, found {}", entries.len()),
            });
        }
        for (j, e) in entries.iter().enumerate() {
            mat[(i, j)] = parse_complex(e).ok_or_else(|| Error::Parse {
                line: ln,
                message: format!("bad complex entry {e:?}"),
            })?;
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse {
            line: ln,
            message: "trailing content after matrix".into(),
        });
    }
    HermitianMatrix::new(mat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_round_trip() {
        for z in [
            Complex64::new(1.5, -0.25),
            Complex64::new(-3.0, 2.0),
            Complex64::new(1e-20, -4.5e300),
            Complex64::new(0.1, 0.2),
            Complex64::new(-0.0, 0.0),
        ] {
            let s = format_complex(z);
            assert_eq!(parse_complex(&s), Some(z), "{s}");
        }
        assert_eq!(format_complex(Complex64::new(1.5, -0.25)), "1.5-0.25j");
        assert_eq!(parse_complex("2"), Some(Complex64::new(2.0, 0.0)));
        assert_eq!(parse_complex("1e-5+2E+3j"), Some(Complex64::new(1e-5, 2e3)));
        assert_eq!(parse_complex("abc"), None);
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let a = HermitianMatrix::from_upper_fn(3, |i, j| Complex64::new(1.0 / (1 + i + j) as f64, (j as f64 - i as f64) / 7.0));
        let back = parse_matrix(&format_matrix(a.as_ref())).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse_matrix("2\n1+0j 0+0j\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_matrix("2\n1+0j\n0+0j 1+0j\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_matrix("x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_matrix("2\n1+0j 1+0j\n0+0j 1+0j\n"), Err(Error::NotHermitian { .. })));
    }
}
