use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::asymmetric::{first_term, second_term, MAX_ASYMMETRIC_FEATURES};
use super::{Posterior, WorldModel};
use crate::distributions::position_values;
use crate::error::{Error, Result};
use crate::types::{full_mask, Coalition, Instance, Token};

/// A directed edge `tail -> head` weighted by `phi(tail -> head)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionEdge {
    pub tail: Coalition,
    pub head: Coalition,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceGraph {
    pub n: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<InteractionEdge>,
    pub order_cap: usize,
}

#[derive(Serialize, Deserialize)]
struct RawEdge {
    tail: Vec<usize>,
    head: Vec<usize>,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n: usize,
    nodes: Vec<usize>,
    order_cap: usize,
    log_base: String,
    edges: Vec<RawEdge>,
}

/// `%g`-style rendering with six significant digits.
fn format_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{v:.*}", (5 - exp) as usize))
    }
}

impl InfluenceGraph {
    /// Sum of the weights of edges whose head contains `i`.
    pub fn feature_influence(&self, i: usize) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.head.contains(i))
            .map(|e| e.weight)
            .sum()
    }

    pub fn influences(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.feature_influence(i)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = RawGraph {
            n: self.n,
            nodes: self.nodes.clone(),
            order_cap: self.order_cap,
            log_base: "e".into(),
            edges: self
                .edges
                .iter()
                .map(|e| RawEdge {
                    tail: e.tail.indices().to_vec(),
                    head: e.head.indices().to_vec(),
                    weight: e.weight,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: RawGraph = serde_json::from_str(s)?;
        let edges = raw
            .edges
            .into_iter()
            .map(|e| {
                let tail = Coalition::new(e.tail, raw.n)?;
                let head = Coalition::new(e.head, raw.n)?;
                if tail.mask() & head.mask() != 0 || !e.weight.is_finite() {
                    return Err(Error::Parse("edge with overlapping ends or non-finite weight".into()));
                }
                Ok(InteractionEdge {
                    tail,
                    head,
                    weight: e.weight,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            n: raw.n,
            nodes: raw.nodes,
            edges,
            order_cap: raw.order_cap,
        })
    }

    /// Graphviz rendering; node labels are feature indices unless `names`
    /// supplies one per feature.
    pub fn to_dot(&self, names: Option<&[String]>) -> String {
        let label = |i: usize| names.and_then(|n| n.get(i)).cloned().unwrap_or_else(|| format!("x{i}"));
        let set = |c: &Coalition| {
            if c.size() == 1 {
                format!("n{}", c.indices()[0])
            } else {
                format!("s{}", c.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_"))
            }
        };
        let mut out = String::from("digraph influence {\n");
        for &i in &self.nodes {
            let _ = writeln!(out, "  n{i} [label=\"{}\"];", label(i).replace('"', "\\\""));
        }
        let mut groups: Vec<&Coalition> = Vec::new();
        for e in &self.edges {
            for c in [&e.tail, &e.head] {
                if c.size() > 1 && !groups.contains(&c) {
                    groups.push(c);
                }
            }
        }
        for c in groups {
            let names: Vec<String> = c.iter().map(label).collect();
            let _ = writeln!(
                out,
                "  {} [shape=box, label=\"{{{}}}\"];",
                set(c),
                names.join(", ").replace('"', "\\\"")
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  {} -> {} [label=\"{}\"];",
                set(&e.tail),
                set(&e.head),
                format_g6(e.weight)
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Non-empty masks of size at most `cap`, ascending.
fn small_subsets(n: usize, cap: usize) -> Vec<u64> {
    (1..=full_mask(n))
        .filter(|m| m.count_ones() as usize <= cap)
        .collect()
}

fn check_cap(n: usize, order_cap: usize) -> Result<()> {
    if order_cap == 0 {
        return Err(Error::Config("order_cap must be at least 1".into()));
    }
    if n > MAX_ASYMMETRIC_FEATURES {
        return Err(Error::Capacity {
            n,
            limit: MAX_ASYMMETRIC_FEATURES,
        });
    }
    Ok(())
}

/// Interaction graph with an edge for every ordered pair of disjoint
/// non-empty subsets of size at most `order_cap`.
pub fn build_influence_graph(world: &WorldModel, x: &Instance, order_cap: usize) -> Result<InfluenceGraph> {
    let n = x.len();
    check_cap(n, order_cap)?;
    let mut post = Posterior::new(world, x)?;
    let subsets = small_subsets(n, order_cap);
    let mut second: HashMap<u64, f64> = HashMap::new();
    let mut edges = Vec::new();
    for &head in &subsets {
        for &tail in subsets.iter().filter(|&&t| t & head == 0) {
            let s = match second.get(&tail) {
                Some(&s) => s,
                None => {
                    let s = second_term(&mut post, tail)?;
                    second.insert(tail, s);
                    s
                }
            };
            let weight = first_term(&mut post, head, tail)? - s;
            edges.push(InteractionEdge {
                tail: Coalition::from_mask(tail, n),
                head: Coalition::from_mask(head, n),
                weight,
            });
        }
    }
    Ok(InfluenceGraph {
        n,
        nodes: (0..n).collect(),
        edges,
        order_cap,
    })
}

/// Bias score of putting `candidate` at position `i`:
/// `|pmi(x'_i) + sum of phi(tail -> head)|` over heads containing `i`, with
/// `x` modified at `i`. Lower means the candidate says less about `y`.
pub fn replacement_bias(
    world: &WorldModel,
    x: &Instance,
    i: usize,
    candidate: Token,
    order_cap: usize,
) -> Result<f64> {
    let n = x.len();
    if i >= n {
        return Err(Error::Argument(format!("position {i} out of range for length {n}")));
    }
    check_cap(n, order_cap)?;
    if !position_values(&world.joint, i).contains(&candidate) {
        return Err(Error::Argument(format!(
            "candidate {candidate} never occurs at position {i} under the joint"
        )));
    }
    let replaced = x.with_value(i, candidate)?;
    let mut post = Posterior::new(world, &replaced)?;
    let bit = 1u64 << i;
    let mut total = post.pmi(bit, 0)?;
    let subsets = small_subsets(n, order_cap);
    for &head in subsets.iter().filter(|&&h| h & bit != 0) {
        for &tail in subsets.iter().filter(|&&t| t & head == 0) {
            total += first_term(&mut post, head, tail)? - second_term(&mut post, tail)?;
        }
    }
    Ok(total.abs())
}
