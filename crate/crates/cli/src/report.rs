//! Plain-text rendering of metric diagnostics.

use serde_json::Value;

/// Rows in render order.
pub const DIAGNOSTIC_KEYS: [&str; 6] = ["quasiH", "quasiW", "hermiticity", "min_eig", "cond_S", "cond_Theta"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemaMismatch {
    #[error("diagnostics must be a JSON object")]
    NotAnObject,
    #[error("unknown diagnostics key `{0}`")]
    UnknownKey(String),
    #[error("diagnostics key `{0}` is not a number")]
    NotANumber(String),
}

/// Fixed-order table of whichever known diagnostics are present, values in
/// scientific notation with 10 significant digits.
pub fn report_render(diagnostics: &Value) -> Result<String, SchemaMismatch> {
    let obj = diagnostics.as_object().ok_or(SchemaMismatch::NotAnObject)?;
    if let Some(k) = obj.keys().find(|k| !DIAGNOSTIC_KEYS.contains(&k.as_str())) {
        return Err(SchemaMismatch::UnknownKey(k.clone()));
    }
    let mut out = format!("{:<12} {:>17}\n", "quantity", "value");
    for key in DIAGNOSTIC_KEYS {
        if let Some(v) = obj.get(key) {
            let x = v.as_f64().ok_or_else(|| SchemaMismatch::NotANumber(key.to_owned()))?;
            out.push_str(&format!("{key:<12} {x:>17.9e}\n"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_is_header_only() {
        let t = report_render(&json!({})).unwrap();
        assert_eq!(t.lines().count(), 1);
        assert!(t.starts_with("quantity"));
    }

    #[test]
    fn full_table_in_fixed_order() {
        let d = json!({
            "cond_Theta": 12.5, "min_eig": 0.25, "quasiW": 1e-15,
            "hermiticity": 0.0, "cond_S": 1.0, "quasiH": 3.0e-14
        });
        let t = report_render(&d).unwrap();
        let rows: Vec<&str> = t.lines().skip(1).collect();
        assert_eq!(rows.len(), 6);
        let keys: Vec<&str> = rows.iter().map(|r| r.split_whitespace().next().unwrap()).collect();
        assert_eq!(keys, DIAGNOSTIC_KEYS);
        assert!(rows[0].ends_with("3.000000000e-14"));
        assert_eq!(report_render(&d).unwrap(), t);
    }

    #[test]
    fn schema_errors() {
        assert_eq!(report_render(&json!([1, 2])), Err(SchemaMismatch::NotAnObject));
        assert_eq!(
            report_render(&json!({"quasiX": 1.0})),
            Err(SchemaMismatch::UnknownKey("quasiX".into()))
        );
        assert_eq!(
            report_render(&json!({"min_eig": "big"})),
            Err(SchemaMismatch::NotANumber("min_eig".into()))
        );
    }
}
