//! CSV and JSON writers. Every float is written with 17 significant digits.

use resonance_core::time::{AmplitudeSeries, ComponentTag, PacketFrame, SiteField};
use resonance_core::{OpenLatticeModel, SpectralSolution, StateClass, C64};
use serde_json::{json, Value};

use crate::error::KitResult;

/// Round-trip float text.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// JSON number, `null` for non-finite values.
pub fn jnum(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// `[re, im]` pair.
pub fn jc(v: C64) -> Value {
    json!([jnum(v.re), jnum(v.im)])
}

/// Writes a header and rows as CSV.
pub fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> KitResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// JSON value to bytes with a trailing newline.
pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s.into_bytes()
}

/// Spectrum header.
pub const SPECTRUM_HEADER: [&str; 7] = ["n", "re_lambda", "im_lambda", "re_E", "im_E", "class", "norm_residual"];

/// One spectrum row (state index 1-based).
pub fn spectrum_row(n: usize, lambda: C64, energy: C64, class: StateClass, residual: f64) -> Vec<String> {
    vec![
        (n + 1).to_string(),
        num(lambda.re),
        num(lambda.im),
        num(energy.re),
        num(energy.im),
        class.name().to_string(),
        num(residual),
    ]
}

/// Spectrum as CSV.
pub fn spectrum_csv(sol: &SpectralSolution) -> KitResult<Vec<u8>> {
    let header: Vec<String> = SPECTRUM_HEADER.iter().map(|s| s.to_string()).collect();
    csv_bytes(
        &header,
        sol.states.iter().enumerate().map(|(n, s)| spectrum_row(n, s.lambda, s.energy, s.class, s.residual)),
    )
}

/// Spectrum as JSON, including eigenvectors and diagnostics.
pub fn spectrum_json(sol: &SpectralSolution) -> Vec<u8> {
    let states: Vec<Value> = sol
        .states
        .iter()
        .enumerate()
        .map(|(n, s)| {
            json!({
                "n": n + 1,
                "lambda": jc(s.lambda),
                "energy": jc(s.energy),
                "class": s.class.name(),
                "norm_residual": jnum(s.residual),
                "partner": s.partner + 1,
                "psi": s.psi.iter().map(|v| jc(*v)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let d = &sol.diagnostics;
    json_bytes(&json!({
        "states": states,
        "n_infinite": sol.n_infinite,
        "diagnostics": {
            "max_residual": jnum(d.max_residual),
            "max_pencil_residual": jnum(d.max_pencil_residual),
            "max_biorthonormality_error": jnum(d.max_biorthonormality_error),
            "min_gap": jnum(d.min_gap),
            "reversed_pencil": d.reversed_pencil,
        }
    }))
}

/// Amplitude header.
pub const AMPLITUDE_HEADER: [&str; 6] = ["t", "re", "im", "abs2", "method", "group"];

fn amp_row(t: f64, v: C64, method: &str, group: &str) -> Vec<String> {
    vec![num(t), num(v.re), num(v.im), num(v.norm_sqr()), method.to_string(), group.to_string()]
}

/// Named groups of a series at time index `i`: total first, then the pole groups.
fn series_groups(a: &AmplitudeSeries, i: usize, with_groups: bool, with_plane: bool) -> Vec<(&'static str, C64)> {
    let mut out = vec![("total", a.values[i])];
    if let (true, Some(g)) = (with_groups, &a.groups) {
        let t = a.times[i];
        out.push((if t > 0.0 { "res" } else { "ar" }, g.resonant_or_ar[i]));
        out.push(("bound_ab", g.bound_ab[i]));
        out.push(("branch", g.branch_power[i]));
        if with_plane {
            out.push(("plane", g.plane_wave[i]));
        }
    }
    out
}

/// Amplitude series as CSV.
pub fn amplitude_csv(a: &AmplitudeSeries, with_groups: bool, with_plane: bool) -> KitResult<Vec<u8>> {
    let header: Vec<String> = AMPLITUDE_HEADER.iter().map(|s| s.to_string()).collect();
    let method = a.method.name();
    let rows = (0..a.times.len()).flat_map(|i| {
        series_groups(a, i, with_groups, with_plane)
            .into_iter()
            .map(move |(g, v)| amp_row(a.times[i], v, method, g))
            .collect::<Vec<_>>()
    });
    csv_bytes(&header, rows)
}

/// Amplitude series as JSON.
pub fn amplitude_json(a: &AmplitudeSeries, with_groups: bool, with_plane: bool) -> Vec<u8> {
    let points: Vec<Value> = (0..a.times.len())
        .map(|i| {
            let mut obj = serde_json::Map::new();
            obj.insert("t".into(), jnum(a.times[i]));
            for (g, v) in series_groups(a, i, with_groups, with_plane) {
                obj.insert(g.into(), jc(v));
            }
            Value::Object(obj)
        })
        .collect();
    json_bytes(&json!({ "method": a.method.name(), "points": points }))
}

/// Packet header.
pub const PACKET_HEADER: [&str; 7] = ["t", "lead", "x", "re", "im", "abs2", "component"];

/// Short component name of a state class.
pub fn class_component(c: StateClass) -> &'static str {
    match c {
        StateClass::Resonant => "res",
        StateClass::AntiResonant => "ar",
        StateClass::Bound => "bound",
        StateClass::AntiBound => "antibound",
        StateClass::Exceptional => "exceptional",
    }
}

/// Components of a frame summed per class, in a fixed order, after `total`.
pub fn frame_components(frame: &PacketFrame, sol: Option<&SpectralSolution>) -> Vec<(String, SiteField)> {
    let mut out = vec![("total".to_string(), frame.total.clone())];
    let (Some(comps), Some(sol)) = (&frame.components, sol) else { return out };
    let mut order: Vec<&'static str> = vec!["free"];
    order.extend(["res", "ar", "bound", "antibound", "exceptional"]);
    for name in order {
        let mut acc: Option<SiteField> = None;
        for (tag, f) in comps {
            let this = match tag {
                ComponentTag::Free => "free",
                ComponentTag::State(n) => class_component(sol.states[*n].class),
            };
            if this == name {
                match &mut acc {
                    Some(a) => a.add(f),
                    None => acc = Some(f.clone()),
                }
            }
        }
        if let Some(a) = acc {
            out.push((name.to_string(), a));
        }
    }
    out
}

/// Packet frames as CSV: dot rows (`lead = dot`, `x` = 1-based site), then each lead.
pub fn packet_csv(model: &OpenLatticeModel, frames: &[PacketFrame], sol: Option<&SpectralSolution>) -> KitResult<Vec<u8>> {
    let header: Vec<String> = PACKET_HEADER.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for f in frames {
        for (name, field) in frame_components(f, sol) {
            for (i, v) in field.dot.iter().enumerate() {
                rows.push(packet_row(f.time, "dot", i + 1, *v, &name));
            }
            for (b, lead) in model.leads().iter().enumerate() {
                for (xi, v) in field.leads[b].iter().enumerate() {
                    rows.push(packet_row(f.time, &lead.label, xi + 1, *v, &name));
                }
            }
        }
    }
    csv_bytes(&header, rows)
}

fn packet_row(t: f64, lead: &str, x: usize, v: C64, component: &str) -> Vec<String> {
    vec![num(t), lead.to_string(), x.to_string(), num(v.re), num(v.im), num(v.norm_sqr()), component.to_string()]
}

/// Packet frames as JSON.
pub fn packet_json(model: &OpenLatticeModel, frames: &[PacketFrame], sol: Option<&SpectralSolution>) -> Vec<u8> {
    let field = |f: &SiteField| {
        let mut leads = serde_json::Map::new();
        for (b, l) in model.leads().iter().enumerate() {
            leads.insert(l.label.clone(), Value::Array(f.leads[b].iter().map(|v| jc(*v)).collect()));
        }
        json!({ "dot": f.dot.iter().map(|v| jc(*v)).collect::<Vec<_>>(), "leads": leads })
    };
    let out: Vec<Value> = frames
        .iter()
        .map(|f| {
            let mut comps = serde_json::Map::new();
            for (name, fl) in frame_components(f, sol) {
                comps.insert(name, field(&fl));
            }
            json!({ "t": jnum(f.time), "norm": jnum(f.total.norm_sqr()), "components": comps })
        })
        .collect();
    json_bytes(&json!({ "frames": out }))
}
