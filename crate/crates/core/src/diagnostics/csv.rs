use std::io::{self, Write};

pub const CSV_HEADER: &str = "run,step,node,metric,value";

/// One metric sample; `node` is −1 for network-level quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run: usize,
    pub step: usize,
    pub node: i64,
    pub metric: &'static str,
    pub value: f64,
}

/// C-style `%.9g` formatting.
pub fn format_g(value: f64) -> String {
    const PRECISION: i32 = 9;
    if value == 0.0 {
        return if value.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".into()
        } else if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        strip_zeros(&format!("{value:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_rows<W: Write>(mut out: W, rows: &[MetricRow]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.run, r.step, r.node, r.metric, format_g(r.value))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (1.0, "1"),
            (0.5, "0.5"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (1.23456789012, "1.23456789"),
            (-2.5, "-2.5"),
            (99999999.95, "100000000"),
            (123456789.5, "123456790"),
            (999999999.5, "1e+09"),
            (1e100, "1e+100"),
            (0.0, "0"),
        ];
        for (v, s) in cases {
            assert_eq!(format_g(v), s, "{v}");
        }
    }

    #[test]
    fn csv_layout() {
        let rows = [MetricRow {
            run: 0,
            step: 3,
            node: -1,
            metric: "acee_x",
            value: 0.25,
        }];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "run,step,node,metric,value\n0,3,-1,acee_x,0.25\n");
    }
}
