//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Values may be
//! quoted. Recognised keys (either `-` or `_` as separator):
//!
//! ```text
//! width = 2,3,4        # alias: n, dims
//! depth = 100          # alias: L
//! input-dim = 4        # alias: d
//! samples = 5000       # alias: N
//! steps = 64,256,1024
//! seed = 7
//! activation = "piecewise:1.0:-1.0"
//! variant = appendix
//! exported-paths = 30
//! ```

use anyhow::{bail, Context, Result};
use depthlab::experiments::Overrides;

pub fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().with_context(|| format!("invalid integer {v:?}")))
        .collect()
}

pub fn parse(text: &str) -> Result<Overrides> {
    let mut o = Overrides::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value", i + 1);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        let ctx = || format!("line {}: bad value for {key}", i + 1);
        match key.as_str() {
            "width" | "n" | "dims" => o.widths = Some(parse_list(value).with_context(ctx)?),
            "depth" | "L" => o.depths = Some(parse_list(value).with_context(ctx)?),
            "input-dim" | "d" => o.input_dim = Some(value.parse().with_context(ctx)?),
            "samples" | "N" => o.samples = Some(parse_list(value).with_context(ctx)?),
            "steps" => o.steps = Some(parse_list(value).with_context(ctx)?),
            "seed" => o.seed = Some(value.parse().with_context(ctx)?),
            "activation" => o.activation = Some(value.parse().with_context(ctx)?),
            "variant" => o.variant = Some(value.parse().with_context(ctx)?),
            "exported-paths" => o.exported_paths = Some(value.parse().with_context(ctx)?),
            other => bail!("line {}: unknown key {other:?}", i + 1),
        }
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use depthlab::experiments::Variant;
    use depthlab::Activation;

    #[test]
    fn parses_keys_and_comments() {
        let o = parse("# sweep\nwidth = 2,3\ninput_dim=4\nactivation = \"piecewise:1:-1\"\nvariant = appendix # note\n").unwrap();
        assert_eq!(o.widths, Some(vec![2, 3]));
        assert_eq!(o.input_dim, Some(4));
        assert_eq!(o.activation, Some(Activation::PiecewiseLinear { pos: 1.0, neg: -1.0 }));
        assert_eq!(o.variant, Some(Variant::Appendix));
        assert_eq!(o.seed, None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(parse("colour = red").is_err());
        assert!(parse("width = two").is_err());
        assert!(parse("width").is_err());
    }
}
