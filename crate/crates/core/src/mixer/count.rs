use std::fmt;

use super::model::ModelParams;

/// Trainable scalar counts broken down by module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub groups: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    pub fn group(&self, name: &str) -> usize {
        self.groups
            .iter()
            .find(|(n, _)| n == name)
            .map_or(0, |(_, c)| *c)
    }
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, count) in &self.groups {
            writeln!(f, "{name:<24} {count:>10}")?;
        }
        write!(f, "{:<24} {:>10}", "total", self.total)
    }
}

fn group_of(tensor: &str) -> &str {
    let mut parts = tensor.splitn(3, '.');
    let first = parts.next().unwrap_or(tensor);
    match first {
        "spatial" | "temporal" => {
            let second = parts.next().unwrap_or("");
            &tensor[..first.len() + 1 + second.len()]
        }
        _ => first,
    }
}

/// Count every distinct parameter once; shared layers appear once.
pub fn param_count(params: &ModelParams) -> ParamCount {
    let mut groups: Vec<(String, usize)> = Vec::new();
    for (name, m) in params.tensors() {
        let g = group_of(&name);
        match groups.last_mut() {
            Some((last, n)) if last == g => *n += m.len(),
            _ => groups.push((g.to_string(), m.len())),
        }
    }
    let total = groups.iter().map(|(_, n)| n).sum();
    ParamCount { groups, total }
}
