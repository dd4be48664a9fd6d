//! Plain-text policy format.
//!
//! ```text
//! simbench-policy 1
//! meta <key> <value...>          (zero or more)
//! class linear|axis_tree|oblique_tree|relu_mlp
//! task classify|regress
//! ...class body...
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip rendering, so save/load is
//! bit-exact. The full grammar lives in `docs/policy-format.md`.

use std::fmt::Write as _;
use std::path::Path;

use super::{
    AxisSplit, Dense, Leaf, LinearPolicy, Node, ObliqueSplit, Policy, PolicyClass, ReluMlp, Split,
    Task, Tree,
};
use crate::error::{Error, Result};

const MAGIC: &str = "simbench-policy 1";

fn floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:?}").unwrap();
    }
}

fn dense_rows(out: &mut String, layer: &Dense) {
    for (row, b) in layer.weights.iter().zip(&layer.bias) {
        out.push_str("row ");
        floats(out, row);
        write!(out, " {b:?}").unwrap();
        out.push('\n');
    }
}

fn leaf_line(out: &mut String, leaf: &Leaf) {
    match leaf {
        Leaf::Class(a) => writeln!(out, "leaf {a}").unwrap(),
        Leaf::Values(v) => {
            out.push_str("leaf ");
            floats(out, v);
            out.push('\n');
        }
    }
}

fn tree_body<S: Split>(out: &mut String, tree: &Tree<S>, split_fields: impl Fn(&mut String, &S)) {
    writeln!(out, "state_dim {}", tree.state_dim()).unwrap();
    writeln!(out, "outputs {}", tree.n_outputs()).unwrap();
    writeln!(out, "nodes {}", tree.nodes().len()).unwrap();
    for node in tree.nodes() {
        match node {
            Node::Internal { split, left, right } => {
                write!(out, "split {left} {right} ").unwrap();
                split_fields(out, split);
                out.push('\n');
            }
            Node::Leaf(leaf) => leaf_line(out, leaf),
        }
    }
}

pub fn render(policy: &Policy) -> String {
    render_with_meta(policy, &[])
}

/// Renders `policy` with `meta` header lines (keys must not contain spaces).
pub fn render_with_meta(policy: &Policy, meta: &[(String, String)]) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    for (k, v) in meta {
        writeln!(out, "meta {k} {v}").unwrap();
    }
    writeln!(out, "class {}", policy.class()).unwrap();
    writeln!(out, "task {}", policy.task().as_str()).unwrap();
    match policy {
        Policy::Linear(p) => {
            writeln!(out, "shape {} {}", p.layer.n_out(), p.layer.n_in()).unwrap();
            dense_rows(&mut out, &p.layer);
        }
        Policy::AxisTree(t) => tree_body(&mut out, t, |o, s| {
            write!(o, "{} {:?}", s.feature, s.threshold).unwrap();
        }),
        Policy::ObliqueTree(t) => tree_body(&mut out, t, |o, s| {
            write!(o, "{:?} ", s.threshold).unwrap();
            floats(o, &s.weights);
        }),
        Policy::ReluMlp(m) => {
            writeln!(out, "layers {}", m.layers.len()).unwrap();
            for layer in &m.layers {
                writeln!(out, "layer {} {}", layer.n_in(), layer.n_out()).unwrap();
                dense_rows(&mut out, layer);
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>)> {
        self.iter
            .next()
            .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
            .ok_or_else(|| Error::format("unexpected end of file"))
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    fn expect(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, fields) = self.next()?;
        match fields.split_first() {
            Some((k, rest)) if *k == key => Ok((n, rest.to_vec())),
            _ => Err(Error::format(format!("line {n}: expected `{key}`"))),
        }
    }

    fn peek_is(&mut self, key: &str) -> bool {
        self.iter
            .peek()
            .is_some_and(|(_, l)| l.split_whitespace().next() == Some(key))
    }
}

fn num<T: std::str::FromStr>(line: usize, field: Option<&&str>) -> Result<T> {
    field
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::format(format!("line {line}: bad or missing number")))
}

fn float_list(line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields.iter().map(|f| num(line, Some(f))).collect()
}

fn read_dense(lines: &mut Lines<'_>, n_out: usize, n_in: usize) -> Result<Dense> {
    let mut weights = Vec::with_capacity(n_out);
    let mut bias = Vec::with_capacity(n_out);
    for _ in 0..n_out {
        let (n, fields) = lines.expect("row")?;
        if fields.len() != n_in + 1 {
            return Err(Error::format(format!(
                "line {n}: expected {} numbers",
                n_in + 1
            )));
        }
        let mut row = float_list(n, &fields)?;
        bias.push(row.pop().unwrap());
        weights.push(row);
    }
    Dense::new(weights, bias).map_err(|e| Error::format(e.to_string()))
}

fn read_tree<S: Split>(
    lines: &mut Lines<'_>,
    task: Task,
    split: impl Fn(usize, &[&str]) -> Result<S>,
) -> Result<Tree<S>> {
    let (n, f) = lines.expect("state_dim")?;
    let state_dim: usize = num(n, f.first())?;
    let (n, f) = lines.expect("outputs")?;
    let n_outputs: usize = num(n, f.first())?;
    let (n, f) = lines.expect("nodes")?;
    let count: usize = num(n, f.first())?;
    let mut nodes = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, fields) = lines.next()?;
        match fields.split_first() {
            Some((&"split", rest)) if rest.len() >= 2 => {
                let left = num(n, rest.first())?;
                let right = num(n, rest.get(1))?;
                nodes.push(Node::Internal {
                    split: split(n, &rest[2..])?,
                    left,
                    right,
                });
            }
            Some((&"leaf", rest)) => {
                let leaf = match task {
                    Task::Classify if rest.len() == 1 => Leaf::Class(num(n, rest.first())?),
                    Task::Regress => Leaf::Values(float_list(n, rest)?),
                    _ => return Err(Error::format(format!("line {n}: bad leaf"))),
                };
                nodes.push(Node::Leaf(leaf));
            }
            _ => {
                return Err(Error::format(format!(
                    "line {n}: expected `split` or `leaf`"
                )))
            }
        }
    }
    Tree::new(nodes, state_dim, n_outputs, task).map_err(|e| Error::format(e.to_string()))
}

pub fn parse(text: &str) -> Result<Policy> {
    parse_with_meta(text).map(|(p, _)| p)
}

pub fn parse_with_meta(text: &str) -> Result<(Policy, Vec<(String, String)>)> {
    let mut lines = Lines {
        iter: text.lines().enumerate().peekable(),
    };
    let (_, magic) = lines.next()?;
    if magic.join(" ") != MAGIC {
        return Err(Error::format("missing `simbench-policy 1` header"));
    }
    let mut meta = Vec::new();
    while lines.peek_is("meta") {
        let (n, f) = lines.expect("meta")?;
        let key = f
            .first()
            .ok_or_else(|| Error::format(format!("line {n}: empty meta")))?;
        meta.push((key.to_string(), f[1..].join(" ")));
    }
    let (n, f) = lines.expect("class")?;
    let class: PolicyClass = f
        .first()
        .ok_or_else(|| Error::format(format!("line {n}: missing class")))?
        .parse()?;
    let (n, f) = lines.expect("task")?;
    let task: Task = f
        .first()
        .ok_or_else(|| Error::format(format!("line {n}: missing task")))?
        .parse()?;

    let policy = match class {
        PolicyClass::Linear => {
            let (n, f) = lines.expect("shape")?;
            let layer = read_dense(&mut lines, num(n, f.first())?, num(n, f.get(1))?)?;
            Policy::Linear(LinearPolicy { layer, task })
        }
        PolicyClass::AxisTree => {
            Policy::AxisTree(read_tree::<AxisSplit>(&mut lines, task, |n, f| {
                Ok(AxisSplit {
                    feature: num(n, f.first())?,
                    threshold: num(n, f.get(1))?,
                })
            })?)
        }
        PolicyClass::ObliqueTree => {
            Policy::ObliqueTree(read_tree::<ObliqueSplit>(&mut lines, task, |n, f| {
                Ok(ObliqueSplit {
                    threshold: num(n, f.first())?,
                    weights: float_list(n, &f[1.min(f.len())..])?,
                })
            })?)
        }
        PolicyClass::ReluMlp => {
            let (n, f) = lines.expect("layers")?;
            let count: usize = num(n, f.first())?;
            let mut layers = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, f) = lines.expect("layer")?;
                let (n_in, n_out) = (num(n, f.first())?, num(n, f.get(1))?);
                layers.push(read_dense(&mut lines, n_out, n_in)?);
            }
            Policy::ReluMlp(ReluMlp::new(layers, task).map_err(|e| Error::format(e.to_string()))?)
        }
    };
    lines.expect("end")?;
    Ok((policy, meta))
}

pub fn save(policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    save_with_meta(policy, &[], path)
}

pub fn save_with_meta(
    policy: &Policy,
    meta: &[(String, String)],
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, render_with_meta(policy, meta))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Policy> {
    load_with_meta(path).map(|(p, _)| p)
}

pub fn load_with_meta(path: impl AsRef<Path>) -> Result<(Policy, Vec<(String, String)>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_with_meta(&text).map_err(|e| match e {
        Error::Format { msg, .. } => Error::Format {
            path: Some(path.to_path_buf()),
            msg,
        },
        other => other,
    })
}
