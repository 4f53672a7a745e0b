//! Report serialization. All floats are written with 17 significant
//! digits so runs are byte-identical regardless of thread count and
//! round-trip exactly.

use serde::Serialize;
use std::io;

/// `%.16e`-style rendering: 1 + 16 = 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:.16e}", value)
    }
}

/// Serialize to JSON with fixed-width floats.
pub fn to_json(value: &impl Serialize) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigFigFormatter);
    value.serialize(&mut ser).expect("report serialization");
    String::from_utf8(out).expect("json is utf8")
}

/// One CSV field; floats go through the 17-digit formatter.
pub enum CsvField {
    Int(i64),
    Float(f64),
    OptFloat(Option<f64>),
    Str(String),
}

pub fn csv_row(fields: &[CsvField]) -> String {
    fields
        .iter()
        .map(|f| match f {
            CsvField::Int(v) => v.to_string(),
            CsvField::Float(v) => fmt_f64(*v),
            CsvField::OptFloat(Some(v)) => fmt_f64(*v),
            CsvField::OptFloat(None) => String::new(),
            CsvField::Str(s) => s.clone(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_at_17_digits() {
        for &x in &[
            std::f64::consts::PI,
            1.0 / 3.0,
            0.166_190_378_969_060_15,
            2.0_f64.powi(-40),
            -1.5e300,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn json_floats_use_fixed_width() {
        #[derive(Serialize)]
        struct R {
            v: f64,
        }
        let s = to_json(&R { v: 0.5 });
        assert_eq!(s, r#"{"v":5.0000000000000000e-1}"#);
        assert_eq!(
            serde_json::from_str::<serde_json::Value>(&s).unwrap()["v"]
                .as_f64()
                .unwrap(),
            0.5
        );
    }

    #[test]
    fn csv_rows() {
        let row = csv_row(&[
            CsvField::Int(3),
            CsvField::Float(0.25),
            CsvField::OptFloat(None),
            CsvField::Str("x".into()),
        ]);
        assert_eq!(row, "3,2.5000000000000000e-1,,x");
    }
}
