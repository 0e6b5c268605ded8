//! Grid and value syntax: `start:stop:step` ranges and comma lists, mixed freely.

use resonance_core::C64;

use crate::error::{KitError, KitResult};

/// Parses `0:10:0.5`, `15,30`, or `0:1:0.25,5`.
pub fn parse_grid(spec: &str) -> KitResult<Vec<f64>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let fields: Vec<&str> = part.split(':').collect();
        match fields.as_slice() {
            [v] => out.push(number(v)?),
            [a, b, s] => {
                let (a, b, s) = (number(a)?, number(b)?, number(s)?);
                if !(s > 0.0) || b < a {
                    return Err(KitError::Input(format!("range '{part}' needs start <= stop and step > 0")));
                }
                let n = ((b - a) / s + 1e-9).floor() as usize;
                if n > 10_000_000 {
                    return Err(KitError::Input(format!("range '{part}' has too many points")));
                }
                out.extend((0..=n).map(|i| a + s * i as f64));
            }
            _ => return Err(KitError::Input(format!("cannot parse grid element '{part}'"))),
        }
    }
    if out.is_empty() {
        return Err(KitError::Input(format!("empty grid '{spec}'")));
    }
    Ok(out)
}

fn number(s: &str) -> KitResult<f64> {
    let v: f64 = s.trim().parse().map_err(|_| KitError::Input(format!("not a number: '{s}'")))?;
    if !v.is_finite() {
        return Err(KitError::Input(format!("not a finite number: '{s}'")));
    }
    Ok(v)
}

/// Parses a complex number `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(s: &str) -> KitResult<C64> {
    let t = s.trim().replace(' ', "");
    let bad = || KitError::Input(format!("cannot parse complex number '{s}'"));
    if let Some(body) = t.strip_suffix('i') {
        let split = body
            .char_indices()
            .skip(1)
            .filter(|(k, c)| (*c == '+' || *c == '-') && !matches!(body.as_bytes()[k - 1], b'e' | b'E'))
            .map(|(k, _)| k)
            .last();
        let (re, im) = match split {
            Some(k) => (&body[..k], &body[k..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            x => x,
        };
        Ok(C64::new(number(re).map_err(|_| bad())?, number(im).map_err(|_| bad())?))
    } else {
        Ok(C64::new(number(&t).map_err(|_| bad())?, 0.0))
    }
}

/// Comma list of complex numbers.
pub fn parse_complex_list(spec: &str) -> KitResult<Vec<C64>> {
    spec.split(',').map(str::trim).filter(|p| !p.is_empty()).map(parse_complex).collect()
}
