//! Numbers with an optional SI prefix: `60M`, `125p`, `1.5k`, `2e-9`.

pub fn parse_si(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return finite(v, s);
    }
    let mut chars = s.chars();
    let last = chars.next_back().ok_or("empty value")?;
    let scale = match last {
        'p' => 1e-12,
        'n' => 1e-9,
        'u' | 'µ' => 1e-6,
        'm' => 1e-3,
        'k' => 1e3,
        'M' => 1e6,
        'G' => 1e9,
        _ => {
            return Err(format!(
                "`{s}` is not a number (accepted suffixes: p n u m k M G)"
            ))
        }
    };
    let mantissa: f64 = chars
        .as_str()
        .parse()
        .map_err(|_| format!("`{s}` is not a number (accepted suffixes: p n u m k M G)"))?;
    finite(mantissa * scale, s)
}

fn finite(v: f64, s: &str) -> Result<f64, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_si("60M").unwrap(), 60e6);
        assert_eq!(parse_si("125p").unwrap(), 125e-12);
        assert_eq!(parse_si("10n").unwrap(), 10e-9);
        assert_eq!(parse_si("1.5k").unwrap(), 1.5e3);
        assert_eq!(parse_si("2u").unwrap(), 2e-6);
        assert_eq!(parse_si("3m").unwrap(), 3e-3);
        assert_eq!(parse_si("1G").unwrap(), 1e9);
    }

    #[test]
    fn bare_numbers_are_base_units() {
        assert_eq!(parse_si("0.6").unwrap(), 0.6);
        assert_eq!(parse_si("1e-9").unwrap(), 1e-9);
        assert_eq!(parse_si(" 42 ").unwrap(), 42.0);
        assert_eq!(parse_si("-1").unwrap(), -1.0);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "M", "abc", "10x", "1e400", "inf", "NaN"] {
            assert!(parse_si(bad).is_err(), "{bad}");
        }
    }
}
