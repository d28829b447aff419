//! Experiment configuration: defaults, flat key=value config files, and
//! flag overrides, resolved in flags > file > defaults order. Every
//! invariant is validated here so runs never start on a bad config.

use bgconv::estimator::VariantKind;
use bgconv::sampling::{InputDistribution, WeightInit};
use bgconv::PaddingMode;
use std::fmt::Write as _;
use std::path::Path;

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Output channels (m).
    pub out_channels: usize,
    /// Input channels (n).
    pub in_channels: usize,
    /// Taps per kernel (K).
    pub kernel_size: usize,
    /// Signal length (D).
    pub length: usize,
    /// Weight trials (S).
    pub s_trials: usize,
    /// Pooled inputs; defaults to `s_trials`.
    pub s_inputs: usize,
    /// Group counts to sweep.
    pub groups: Vec<usize>,
    /// Model families to sweep.
    pub variants: Vec<VariantKind>,
    pub distribution: InputDistribution,
    pub init: WeightInit,
    pub padding: PaddingMode,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_channels: 256,
            in_channels: 256,
            kernel_size: 3,
            length: 32,
            s_trials: 100,
            s_inputs: 100,
            groups: vec![4, 8, 16, 32, 64],
            variants: vec![VariantKind::Gc, VariantKind::Bgc],
            distribution: InputDistribution::Normal01,
            init: WeightInit::He,
            padding: PaddingMode::ZeroSame,
            seed: 42,
        }
    }
}

/// Unresolved override set: every field optional, merged onto a base.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub out_channels: Option<usize>,
    pub in_channels: Option<usize>,
    pub kernel_size: Option<usize>,
    pub length: Option<usize>,
    pub s_trials: Option<usize>,
    pub s_inputs: Option<usize>,
    pub groups: Option<Vec<usize>>,
    pub variants: Option<Vec<VariantKind>>,
    pub distribution: Option<InputDistribution>,
    pub init: Option<WeightInit>,
    pub padding: Option<PaddingMode>,
    pub seed: Option<u64>,
}

impl ConfigOverrides {
    fn apply(&self, base: &mut ExperimentConfig, s_inputs_explicit: &mut bool) {
        if let Some(v) = self.out_channels {
            base.out_channels = v;
        }
        if let Some(v) = self.in_channels {
            base.in_channels = v;
        }
        if let Some(v) = self.kernel_size {
            base.kernel_size = v;
        }
        if let Some(v) = self.length {
            base.length = v;
        }
        if let Some(v) = self.s_trials {
            base.s_trials = v;
        }
        if let Some(v) = self.s_inputs {
            base.s_inputs = v;
            *s_inputs_explicit = true;
        }
        if let Some(v) = &self.groups {
            base.groups = v.clone();
        }
        if let Some(v) = &self.variants {
            base.variants = v.clone();
        }
        if let Some(v) = self.distribution {
            base.distribution = v;
        }
        if let Some(v) = self.init {
            base.init = v;
        }
        if let Some(v) = self.padding {
            base.padding = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
    }
}

/// Parses a comma-separated list of group counts.
pub fn parse_groups(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| format!("invalid group count `{s}`")))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| {
            if v.is_empty() {
                Err("group list is empty".into())
            } else {
                Ok(v)
            }
        })
}

/// Parses a comma-separated list of variants.
pub fn parse_variants(text: &str) -> Result<Vec<VariantKind>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v: Vec<VariantKind>| {
            if v.is_empty() {
                Err("variant list is empty".into())
            } else {
                Ok(v)
            }
        })
}

/// Parses the flat key=value config file format. Lines are `key = value`,
/// `#` starts a comment, blank lines are ignored, lists are
/// comma-separated. Unknown keys are errors so typos cannot silently fall
/// back to defaults.
pub fn parse_config_file(path: &Path) -> Result<ConfigOverrides, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    let mut out = ConfigOverrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| format!("{}:{}: {msg}", path.display(), idx + 1);
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected key = value, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        let int = |what: &str| -> Result<usize, String> {
            value
                .parse::<usize>()
                .map_err(|_| at(format!("invalid {what} `{value}`")))
        };
        match key {
            "m" => out.out_channels = Some(int("channel count")?),
            "n" => out.in_channels = Some(int("channel count")?),
            "K" => out.kernel_size = Some(int("kernel size")?),
            "D" => out.length = Some(int("signal length")?),
            "S" => out.s_trials = Some(int("trial count")?),
            "S_inputs" => out.s_inputs = Some(int("input count")?),
            "groups" => out.groups = Some(parse_groups(value).map_err(at)?),
            "variant" => out.variants = Some(parse_variants(value).map_err(at)?),
            "dist" => out.distribution = Some(value.parse().map_err(at)?),
            "init" => out.init = Some(value.parse().map_err(at)?),
            "padding" => out.padding = Some(value.parse().map_err(at)?),
            "seed" => {
                out.seed = Some(
                    value
                        .parse::<u64>()
                        .map_err(|_| at(format!("invalid seed `{value}`")))?,
                )
            }
            other => return Err(at(format!("unknown config key `{other}`"))),
        }
    }
    Ok(out)
}

/// Resolves the final configuration: defaults, then file values, then flag
/// values, then validation. `s_inputs` follows `s_trials` unless set
/// explicitly at either layer.
pub fn resolve(
    file: Option<&Path>,
    flags: &ConfigOverrides,
) -> Result<ExperimentConfig, String> {
    let mut config = ExperimentConfig::default();
    let mut s_inputs_explicit = false;
    if let Some(path) = file {
        parse_config_file(path)?.apply(&mut config, &mut s_inputs_explicit);
    }
    flags.apply(&mut config, &mut s_inputs_explicit);
    if !s_inputs_explicit {
        config.s_inputs = config.s_trials;
    }
    validate(&config)?;
    Ok(config)
}

fn validate(config: &ExperimentConfig) -> Result<(), String> {
    for (what, v) in [
        ("m", config.out_channels),
        ("n", config.in_channels),
        ("K", config.kernel_size),
        ("D", config.length),
        ("S", config.s_trials),
        ("S_inputs", config.s_inputs),
    ] {
        if v == 0 {
            return Err(format!("{what} must be positive"));
        }
    }
    if config.kernel_size.is_multiple_of(2) {
        return Err(format!(
            "K must be odd (a centered kernel), got {}",
            config.kernel_size
        ));
    }
    if config.groups.is_empty() {
        return Err("groups list is empty".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    for &groups in &config.groups {
        if groups == 0 {
            return Err("group count 0 is invalid".into());
        }
        if !seen.insert(groups) {
            return Err(format!("duplicate group count {groups}"));
        }
        for (what, channels) in [("m", config.out_channels), ("n", config.in_channels)] {
            if channels % groups != 0 {
                return Err(format!(
                    "group count {groups} does not divide {what} = {channels}"
                ));
            }
        }
    }
    if config.variants.is_empty() {
        return Err("variant list is empty".into());
    }
    let mut seen_variants = Vec::new();
    for v in &config.variants {
        if seen_variants.contains(v) {
            return Err(format!("duplicate variant {v}"));
        }
        seen_variants.push(*v);
    }
    // Every requested system must be (over)determined: the pooled rows
    // must cover the widest design.
    let rows = config.s_inputs * config.length;
    for &groups in &config.groups {
        for variant in &config.variants {
            let unknowns =
                variant.unknowns_per_channel(config.in_channels, config.kernel_size, groups);
            if rows < unknowns {
                return Err(format!(
                    "underdetermined system: S_inputs*D = {rows} rows < {unknowns} unknowns \
                     ({variant} at N={groups}); increase S_inputs or D"
                ));
            }
        }
    }
    Ok(())
}

/// Renders the resolved config as `#`-prefixed comment lines embedded in
/// every output file — enough to re-run the experiment exactly.
pub fn echo_lines(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    let groups = config
        .groups
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let variants = config
        .variants
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let _ = writeln!(out, "# m = {}", config.out_channels);
    let _ = writeln!(out, "# n = {}", config.in_channels);
    let _ = writeln!(out, "# K = {}", config.kernel_size);
    let _ = writeln!(out, "# D = {}", config.length);
    let _ = writeln!(out, "# S = {}", config.s_trials);
    let _ = writeln!(out, "# S_inputs = {}", config.s_inputs);
    let _ = writeln!(out, "# groups = {groups}");
    let _ = writeln!(out, "# variant = {variants}");
    let _ = writeln!(out, "# dist = {}", config.distribution);
    let _ = writeln!(out, "# init = {}", config.init);
    let _ = writeln!(out, "# padding = {}", config.padding);
    let _ = writeln!(out, "# seed = {}", config.seed);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let config = resolve(None, &ConfigOverrides::default()).unwrap();
        assert_eq!(config.out_channels, 256);
        assert_eq!(config.s_inputs, 100);
        assert_eq!(config.groups, vec![4, 8, 16, 32, 64]);
    }

    #[test]
    fn s_inputs_follows_s_trials_unless_explicit() {
        let flags = ConfigOverrides {
            s_trials: Some(40),
            ..Default::default()
        };
        assert_eq!(resolve(None, &flags).unwrap().s_inputs, 40);
        let flags = ConfigOverrides {
            s_trials: Some(40),
            s_inputs: Some(7),
            groups: Some(vec![1]),
            out_channels: Some(8),
            in_channels: Some(8),
            length: Some(8),
            ..Default::default()
        };
        assert_eq!(resolve(None, &flags).unwrap().s_inputs, 7);
    }

    #[test]
    fn non_dividing_group_count_is_rejected() {
        let flags = ConfigOverrides {
            groups: Some(vec![7]),
            ..Default::default()
        };
        let err = resolve(None, &flags).unwrap_err();
        assert!(err.contains('7') && err.contains("256"), "{err}");
    }

    #[test]
    fn underdetermined_config_is_rejected_up_front() {
        let flags = ConfigOverrides {
            s_trials: Some(2),
            length: Some(16),
            groups: Some(vec![4]),
            ..Default::default()
        };
        let err = resolve(None, &flags).unwrap_err();
        assert!(err.contains("underdetermined"), "{err}");
    }

    #[test]
    fn even_kernel_is_rejected() {
        let flags = ConfigOverrides {
            kernel_size: Some(4),
            ..Default::default()
        };
        assert!(resolve(None, &flags).unwrap_err().contains("odd"));
    }

    #[test]
    fn echo_lines_cover_all_semantic_keys() {
        let lines = echo_lines(&ExperimentConfig::default());
        for key in ["m", "n", "K", "D", "S", "S_inputs", "groups", "variant", "dist", "init", "padding", "seed"] {
            assert!(lines.contains(&format!("# {key} = ")), "missing {key}");
        }
    }
}
