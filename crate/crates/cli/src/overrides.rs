//! Dotted-path edits of a scenario's TOML tree, used by `--sweep` and
//! `sweep --over`.
//!
//! A path is a sequence of keys and array indices, e.g. `seed`,
//! `workloads.0.rate_mbps` or `paths[1].delay_ms`. A `*` index applies the
//! edit to every element of an array.

use anyhow::{bail, Context, Result};
use toml::Value;

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Key(String),
    Index(usize),
    All,
}

fn parse_path(path: &str) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for part in path.replace('[', ".").replace(']', "").split('.') {
        if part.is_empty() {
            bail!("malformed field path `{path}`");
        }
        out.push(match part {
            "*" => Segment::All,
            p if p.bytes().all(|b| b.is_ascii_digit()) => Segment::Index(p.parse()?),
            p => Segment::Key(p.to_string()),
        });
    }
    Ok(out)
}

/// Parses one sweep value as a TOML scalar; bare words become strings.
pub fn parse_value(text: &str) -> Value {
    let text = text.trim();
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

/// Splits `field=v1,v2,...` into the field path and its values.
pub fn parse_assignment(expr: &str) -> Result<(String, Vec<String>)> {
    let (field, values) = expr
        .split_once('=')
        .with_context(|| format!("expected `field=v1,v2,...`, got `{expr}`"))?;
    let field = field.trim();
    if field.is_empty() {
        bail!("missing field name in `{expr}`");
    }
    let values: Vec<String> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    if values.is_empty() {
        bail!("no values given for `{field}`");
    }
    parse_path(field)?;
    Ok((field.to_string(), values))
}

/// Sets `path` to `value`. Missing final keys are created and left for the
/// scenario parser to accept or reject; missing intermediate tables or
/// out-of-range indices are errors.
pub fn set(root: &mut Value, path: &str, value: &Value) -> Result<()> {
    let segments = parse_path(path)?;
    set_at(root, &segments, value).with_context(|| format!("unknown field `{path}`"))
}

fn set_at(node: &mut Value, segments: &[Segment], value: &Value) -> Result<()> {
    let Some((first, rest)) = segments.split_first() else {
        *node = value.clone();
        return Ok(());
    };
    match (first, node) {
        (Segment::Key(k), Value::Table(t)) => match t.get_mut(k) {
            Some(child) => set_at(child, rest, value),
            None if rest.is_empty() => {
                t.insert(k.clone(), value.clone());
                Ok(())
            }
            None => bail!("no table `{k}`"),
        },
        (Segment::Index(i), Value::Array(a)) => {
            let len = a.len();
            let child = a
                .get_mut(*i)
                .with_context(|| format!("index {i} out of range (length {len})"))?;
            set_at(child, rest, value)
        }
        (Segment::All, Value::Array(a)) => {
            if a.is_empty() {
                bail!("`*` over an empty array");
            }
            a.iter_mut()
                .try_for_each(|child| set_at(child, rest, value))
        }
        (seg, _) => bail!("cannot apply {seg:?} here"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> Value {
        r#"
seed = 1
[[paths]]
rate_mbps = 6
[[paths]]
rate_mbps = 6
[[workloads]]
type = "cbr"
rate_mbps = 12
"#
        .parse::<toml::Table>()
        .map(Value::Table)
        .unwrap()
    }

    #[test]
    fn values_keep_their_toml_type() {
        assert_eq!(parse_value("4"), Value::Integer(4));
        assert_eq!(parse_value("2.5"), Value::Float(2.5));
        assert_eq!(parse_value("qaware"), Value::String("qaware".into()));
        assert_eq!(parse_value("\"ecf\""), Value::String("ecf".into()));
    }

    #[test]
    fn sets_nested_and_wildcard_fields() {
        let mut t = tree();
        set(&mut t, "workloads.0.rate_mbps", &Value::Integer(8)).unwrap();
        set(&mut t, "paths[*].delay_ms", &Value::Integer(15)).unwrap();
        set(&mut t, "seed", &Value::Integer(3)).unwrap();
        assert_eq!(t["workloads"][0]["rate_mbps"].as_integer(), Some(8));
        assert_eq!(t["paths"][1]["delay_ms"].as_integer(), Some(15));
        assert_eq!(t["seed"].as_integer(), Some(3));
    }

    #[test]
    fn rejects_bad_paths() {
        let mut t = tree();
        assert!(set(&mut t, "workloads.3.rate_mbps", &Value::Integer(1)).is_err());
        assert!(set(&mut t, "nosuch.rate", &Value::Integer(1)).is_err());
        assert!(set(&mut t, "paths..rate", &Value::Integer(1)).is_err());
    }

    #[test]
    fn assignment_needs_values() {
        assert!(parse_assignment("seed=").is_err());
        assert!(parse_assignment("seed").is_err());
        let (f, v) = parse_assignment("workloads.0.rate_mbps=4, 6,8").unwrap();
        assert_eq!((f.as_str(), v.len()), ("workloads.0.rate_mbps", 3));
    }
}
