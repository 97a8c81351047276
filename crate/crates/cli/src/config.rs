//! Experiment configuration: a flat, typed key-value text format with
//! sections. Parsing is line-anchored, unknown keys are rejected, and the
//! canonical echo (sections and keys in fixed order) is the normative
//! serialization: parse -> echo -> parse is a fixed point.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

/// One parsed section: key -> (line, raw value).
type Section = BTreeMap<String, (usize, String)>;

#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, (usize, Section)>,
}

pub const SECTION_ORDER: [&str; 7] = [
    "manifold",
    "bundle",
    "potential",
    "section",
    "section2",
    "run",
    "output",
];

const KEY_ORDER: [(&str, &[&str]); 7] = [
    ("manifold", &["kind", "dim", "length", "lengths", "radius", "series_terms", "t0"]),
    ("bundle", &["rank", "connection", "beta"]),
    (
        "potential",
        &[
            "kind", "value", "offset", "amplitude", "kappa", "center", "cutoff", "coeff",
            "power", "b_field", "scal", "lo", "hi", "values",
        ],
    ),
    (
        "section",
        &["kind", "center", "width", "amplitude", "mode", "support_lo", "support_hi"],
    ),
    (
        "section2",
        &["kind", "center", "width", "amplitude", "mode", "support_lo", "support_hi"],
    ),
    (
        "run",
        &[
            "t", "times", "x", "grid", "paths", "dt", "seed", "nodes", "margin_h",
            "window", "set1", "set2", "radii_h", "bump_center", "bump_width", "points",
            "sampling",
        ],
    ),
    ("output", &["format", "path", "path_dump", "path_dump_limit"]),
];

fn allowed_keys(section: &str) -> Option<&'static [&'static str]> {
    KEY_ORDER
        .iter()
        .find(|(name, _)| *name == section)
        .map(|(_, keys)| *keys)
}

pub fn parse_raw(text: &str) -> Result<RawConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut raw = RawConfig::default();
    let mut current: Option<String> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => {
                    let name = name.trim().to_string();
                    if !SECTION_ORDER.contains(&name.as_str()) {
                        errors.push(ConfigError {
                            line: lineno,
                            message: format!("unknown section `[{name}]`"),
                        });
                        current = None;
                        continue;
                    }
                    if raw.sections.contains_key(&name) {
                        errors.push(ConfigError {
                            line: lineno,
                            message: format!("duplicate section `[{name}]`"),
                        });
                    }
                    raw.sections
                        .entry(name.clone())
                        .or_insert_with(|| (lineno, Section::new()));
                    current = Some(name);
                }
                _ => {
                    errors.push(ConfigError {
                        line: lineno,
                        message: "malformed section header".into(),
                    });
                    current = None;
                }
            }
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            errors.push(ConfigError {
                line: lineno,
                message: format!("expected `key = value`, got `{trimmed}`"),
            });
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(section) = &current else {
            errors.push(ConfigError {
                line: lineno,
                message: format!("key `{key}` outside any section"),
            });
            continue;
        };
        let allowed = allowed_keys(section).unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            errors.push(ConfigError {
                line: lineno,
                message: format!("unknown key `{key}` in section `[{section}]`"),
            });
            continue;
        }
        let entry = &mut raw.sections.get_mut(section).unwrap().1;
        if entry.contains_key(&key) {
            errors.push(ConfigError {
                line: lineno,
                message: format!("duplicate key `{key}` in section `[{section}]`"),
            });
            continue;
        }
        entry.insert(key, (lineno, value));
    }
    if errors.is_empty() {
        Ok(raw)
    } else {
        Err(errors)
    }
}

impl RawConfig {
    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&(usize, String)> {
        self.sections.get(section).and_then(|(_, s)| s.get(key))
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&(usize, String), ConfigError> {
        if !self.has_section(section) {
            return Err(ConfigError {
                line: 0,
                message: format!("missing section `[{section}]`"),
            });
        }
        self.get(section, key).ok_or_else(|| ConfigError {
            line: self.sections[section].0,
            message: format!("missing key `{key}` in section `[{section}]`"),
        })
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let (line, v) = self.require(section, key)?;
        v.parse::<f64>().map_err(|_| ConfigError {
            line: *line,
            message: format!("`{key}` must be a number, got `{v}`"),
        })
    }

    pub fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| ConfigError {
                    line: *line,
                    message: format!("`{key}` must be a number, got `{v}`"),
                }),
        }
    }

    pub fn u64_of(&self, section: &str, key: &str) -> Result<u64, ConfigError> {
        let (line, v) = self.require(section, key)?;
        v.parse::<u64>().map_err(|_| ConfigError {
            line: *line,
            message: format!("`{key}` must be a nonnegative integer, got `{v}`"),
        })
    }

    pub fn u64_opt(&self, section: &str, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<u64>().map(Some).map_err(|_| ConfigError {
                line: *line,
                message: format!("`{key}` must be a nonnegative integer, got `{v}`"),
            }),
        }
    }

    pub fn string(&self, section: &str, key: &str) -> Result<String, ConfigError> {
        Ok(self.require(section, key)?.1.clone())
    }

    pub fn string_opt(&self, section: &str, key: &str) -> Option<String> {
        self.get(section, key).map(|(_, v)| v.clone())
    }

    /// Space-separated float list.
    pub fn f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        let (line, v) = self.require(section, key)?;
        parse_floats(v).map_err(|bad| ConfigError {
            line: *line,
            message: format!("`{key}`: `{bad}` is not a number"),
        })
    }

    pub fn f64_list_opt(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((line, v)) => parse_floats(v).map(Some).map_err(|bad| ConfigError {
                line: *line,
                message: format!("`{key}`: `{bad}` is not a number"),
            }),
        }
    }

    /// Semicolon-separated list of space-separated coordinate tuples.
    pub fn point_list(&self, section: &str, key: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
        let (line, v) = self.require(section, key)?;
        let mut out = Vec::new();
        for chunk in v.split(';') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            out.push(parse_floats(chunk).map_err(|bad| ConfigError {
                line: *line,
                message: format!("`{key}`: `{bad}` is not a number"),
            })?);
        }
        if out.is_empty() {
            return Err(ConfigError {
                line: *line,
                message: format!("`{key}` lists no points"),
            });
        }
        Ok(out)
    }

    /// Canonical serialization: fixed section order, fixed key order,
    /// shortest round-trip float formatting (inherited from the stored
    /// string after numeric normalization at validation time).
    pub fn canonical_echo(&self) -> String {
        let mut out = String::new();
        for name in SECTION_ORDER {
            let Some((_, section)) = self.sections.get(name) else {
                continue;
            };
            let _ = writeln!(out, "[{name}]");
            for key in allowed_keys(name).unwrap_or(&[]) {
                if let Some((_, value)) = section.get(*key) {
                    let _ = writeln!(out, "{key} = {value}");
                }
            }
            let _ = writeln!(out);
        }
        out
    }

    /// Rewrites every numeric-looking value through f64/u64 parsing so the
    /// echo is in normalized form.
    pub fn normalize_numbers(&mut self) {
        for (_, (_, section)) in self.sections.iter_mut() {
            for (_, (_, value)) in section.iter_mut() {
                let parts: Vec<&str> = value.split(';').collect();
                let mut normalized_parts = Vec::with_capacity(parts.len());
                let mut all_numeric = true;
                for part in &parts {
                    let toks: Vec<&str> = part.split_whitespace().collect();
                    if toks.is_empty() {
                        all_numeric = false;
                        break;
                    }
                    let mut norm_toks = Vec::with_capacity(toks.len());
                    for t in toks {
                        if let Ok(u) = t.parse::<u64>() {
                            norm_toks.push(u.to_string());
                        } else if let Ok(x) = t.parse::<f64>() {
                            norm_toks.push(format!("{x}"));
                        } else {
                            all_numeric = false;
                            break;
                        }
                    }
                    if !all_numeric {
                        break;
                    }
                    normalized_parts.push(norm_toks.join(" "));
                }
                if all_numeric {
                    *value = normalized_parts.join(" ; ");
                }
            }
        }
    }
}

impl RawConfig {
    /// Inserts or replaces a value (used by environment overrides).
    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        let entry = self
            .sections
            .entry(section.to_string())
            .or_insert_with(|| (0, Section::new()));
        entry.1.insert(key.to_string(), (0, value.to_string()));
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for tok in s.split_whitespace() {
        out.push(tok.parse::<f64>().map_err(|_| tok.to_string())?);
    }
    if out.is_empty() {
        return Err(s.to_string());
    }
    Ok(out)
}
