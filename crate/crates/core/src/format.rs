//! Text file formats.
//!
//! Factor graphs:
//!
//! ```text
//! mrfnas-factor-graph 1
//! # comment
//! n: 2
//! labels 0: off on
//! labels 1: 0 1
//! unary 0: 0 1
//! pairwise 0 1:
//! 0 0
//! 0 2
//! constant: 0
//! ```
//!
//! Every variable needs a `labels` line. Missing `unary` lines mean zeros,
//! a `pairwise i j:` header is followed by `k_i` rows of `k_j` values.
//!
//! Profiling samples and Gibbs samples are CSV files whose first line is a
//! `# mrfnas-profiles 1` or `# mrfnas-samples 1` comment, followed by a
//! header row of variable names. Profiles end each row with the measured
//! value in a `measured[unit]` column.
//!
//! Templates are small key/value files headed `mrfnas-template 1`, or inline
//! specs such as `unet:depth=3,base=16`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::arch::{Backbone, Template, TemplateSpec};
use crate::error::{Error, Result};
use crate::graph::{Assignment, FactorGraph, LabelSet, PairTable};
use crate::resource::{ProfilingSample, ResourceUnit};

pub const GRAPH_HEADER: &str = "mrfnas-factor-graph 1";
pub const PROFILES_HEADER: &str = "# mrfnas-profiles 1";
pub const SAMPLES_HEADER: &str = "# mrfnas-samples 1";
pub const TEMPLATE_HEADER: &str = "mrfnas-template 1";

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_floats(line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| perr(line, format!("`{t}` is not a number")))
        })
        .collect()
}

fn parse_index(line: usize, text: &str) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| perr(line, format!("`{}` is not a variable index", text.trim())))
}

pub fn render_factor_graph(graph: &FactorGraph) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "{GRAPH_HEADER}");
    let _ = writeln!(s, "n: {}", graph.num_vars());
    for (v, ls) in graph.label_sets().iter().enumerate() {
        if let Some(bad) = ls.names().iter().find(|n| n.is_empty() || n.contains(char::is_whitespace)) {
            return Err(Error::InvalidConfig(format!(
                "label `{bad}` of variable {v} cannot be written"
            )));
        }
        let _ = writeln!(s, "labels {v}: {}", ls.names().join(" "));
    }
    for (v, u) in graph.unaries().iter().enumerate() {
        if u.iter().any(|&x| x != 0.0) {
            let vals: Vec<String> = u.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "unary {v}: {}", vals.join(" "));
        }
    }
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let t = graph.pairwise(e);
        let _ = writeln!(s, "pairwise {i} {j}:");
        for a in 0..t.rows() {
            let row: Vec<String> = t.row(a).iter().map(f64::to_string).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    let _ = writeln!(s, "constant: {}", graph.constant());
    Ok(s)
}

pub fn parse_factor_graph(text: &str) -> Result<FactorGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((_, l)) if l == GRAPH_HEADER => {}
        Some((no, l)) => return Err(perr(no, format!("expected `{GRAPH_HEADER}`, found `{l}`"))),
        None => return Err(perr(1, "empty file")),
    }
    let n = match lines.next() {
        Some((no, l)) => match l.strip_prefix("n:") {
            Some(v) => parse_index(no, v)?,
            None => return Err(perr(no, "expected `n: <count>`")),
        },
        None => return Err(perr(1, "missing variable count")),
    };

    let mut labels: Vec<Option<LabelSet>> = vec![None; n];
    let mut unary: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut edges = Vec::new();
    let mut tables = Vec::new();
    let mut constant = 0.0;
    let mut last_line = 2;

    while let Some((no, line)) = lines.next() {
        last_line = no;
        let (head, rest) = line
            .split_once(':')
            .ok_or_else(|| perr(no, format!("unrecognized line `{line}`")))?;
        let mut words = head.split_whitespace();
        let kw = words.next().unwrap_or("");
        let args: Vec<&str> = words.collect();
        let var = |k: usize| -> Result<usize> {
            let v = parse_index(no, args.get(k).copied().unwrap_or(""))?;
            if v >= n {
                return Err(perr(no, format!("variable {v} out of range (n = {n})")));
            }
            Ok(v)
        };
        match (kw, args.len()) {
            ("labels", 1) => {
                let v = var(0)?;
                if labels[v].is_some() {
                    return Err(perr(no, format!("labels for variable {v} given twice")));
                }
                let names: Vec<&str> = rest.split_whitespace().collect();
                labels[v] = Some(
                    LabelSet::new(names).map_err(|_| perr(no, format!("variable {v} has no labels")))?,
                );
            }
            ("unary", 1) => {
                let v = var(0)?;
                if unary[v].is_some() {
                    return Err(perr(no, format!("unary for variable {v} given twice")));
                }
                unary[v] = Some(parse_floats(no, rest)?);
            }
            ("pairwise", 2) => {
                let (i, j) = (var(0)?, var(1)?);
                if !rest.trim().is_empty() {
                    return Err(perr(no, "pairwise header must end with `:`"));
                }
                let rows = labels[i]
                    .as_ref()
                    .ok_or_else(|| perr(no, format!("pairwise before labels of variable {i}")))?
                    .len();
                let cols = labels[j]
                    .as_ref()
                    .ok_or_else(|| perr(no, format!("pairwise before labels of variable {j}")))?
                    .len();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let (rno, row) = lines
                        .next()
                        .ok_or_else(|| perr(no, format!("pairwise {i} {j}: missing row {r}")))?;
                    last_line = rno;
                    let vals = parse_floats(rno, row)?;
                    if vals.len() != cols {
                        return Err(perr(rno, format!("expected {cols} values, found {}", vals.len())));
                    }
                    data.extend(vals);
                }
                edges.push((i, j));
                tables.push(PairTable::from_flat(rows, cols, data)?);
            }
            ("constant", 0) => {
                let v = parse_floats(no, rest)?;
                if v.len() != 1 {
                    return Err(perr(no, "constant takes one value"));
                }
                constant = v[0];
            }
            _ => return Err(perr(no, format!("unrecognized line `{line}`"))),
        }
    }

    let label_sets = labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| perr(last_line, format!("missing labels for variable {v}"))))
        .collect::<Result<Vec<_>>>()?;
    FactorGraph::new(label_sets, unary, edges, tables, constant).map_err(|e| perr(last_line, e.to_string()))
}

pub fn read_factor_graph(path: &Path) -> Result<FactorGraph> {
    parse_factor_graph(&fs::read_to_string(path)?)
}

pub fn write_factor_graph(path: &Path, graph: &FactorGraph) -> Result<()> {
    fs::write(path, render_factor_graph(graph)?)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    perr(line, e.to_string())
}

fn check_first_line(text: &str, header: &str) -> Result<()> {
    match text.lines().next() {
        Some(l) if l.trim() == header => Ok(()),
        Some(l) => Err(perr(1, format!("expected `{header}`, found `{}`", l.trim()))),
        None => Err(perr(1, "empty file")),
    }
}

fn render_rows(header: &str, names: &[String], extra: Option<&str>, rows: &[(Vec<String>, Option<f64>)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<String> = names.to_vec();
    if let Some(x) = extra {
        head.push(x.to_string());
    }
    w.write_record(&head).map_err(csv_err)?;
    for (labels, value) in rows {
        let mut rec = labels.clone();
        if let Some(v) = value {
            rec.push(v.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(format!("{header}\n{body}"))
}

type Rows = (Vec<String>, Vec<(Vec<usize>, Vec<String>)>);

fn parse_rows(text: &str, header: &str) -> Result<Rows> {
    check_first_line(text, header)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((vec![line], rec.iter().map(String::from).collect()));
    }
    Ok((names, rows))
}

fn parse_labels(line: usize, fields: &[String]) -> Result<Assignment> {
    fields
        .iter()
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| perr(line, format!("`{f}` is not a label index")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Assignment::new)
}

pub fn render_profiles(samples: &[ProfilingSample], names: &[String], unit: ResourceUnit) -> Result<String> {
    let rows: Vec<(Vec<String>, Option<f64>)> = samples
        .iter()
        .map(|s| {
            if s.assignment.len() != names.len() {
                return Err(Error::ShapeMismatch("sample length differs from header".into()));
            }
            Ok((s.assignment.iter().map(usize::to_string).collect(), Some(s.measured)))
        })
        .collect::<Result<_>>()?;
    render_rows(PROFILES_HEADER, names, Some(&format!("measured[{unit}]")), &rows)
}

/// Returns the samples, the variable names and the unit.
pub fn parse_profiles(text: &str) -> Result<(Vec<ProfilingSample>, Vec<String>, ResourceUnit)> {
    let (mut names, rows) = parse_rows(text, PROFILES_HEADER)?;
    let last = names.pop().ok_or_else(|| perr(2, "missing header row"))?;
    let unit = last
        .strip_prefix("measured[")
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| perr(2, format!("last column must be `measured[unit]`, found `{last}`")))?
        .parse::<ResourceUnit>()
        .map_err(|e| perr(2, e.to_string()))?;
    let samples = rows
        .into_iter()
        .map(|(pos, fields)| {
            let line = pos[0];
            if fields.len() != names.len() + 1 {
                return Err(perr(line, format!("expected {} fields, found {}", names.len() + 1, fields.len())));
            }
            let measured = fields[names.len()]
                .parse::<f64>()
                .map_err(|_| perr(line, format!("`{}` is not a number", fields[names.len()])))?;
            Ok(ProfilingSample {
                assignment: parse_labels(line, &fields[..names.len()])?,
                measured,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, names, unit))
}

pub fn read_profiles(path: &Path) -> Result<(Vec<ProfilingSample>, Vec<String>, ResourceUnit)> {
    parse_profiles(&fs::read_to_string(path)?)
}

pub fn write_profiles(path: &Path, samples: &[ProfilingSample], names: &[String], unit: ResourceUnit) -> Result<()> {
    fs::write(path, render_profiles(samples, names, unit)?)?;
    Ok(())
}

pub fn render_samples(samples: &[Assignment], names: &[String]) -> Result<String> {
    let rows: Vec<(Vec<String>, Option<f64>)> = samples
        .iter()
        .map(|x| {
            if x.len() != names.len() {
                return Err(Error::ShapeMismatch("sample length differs from header".into()));
            }
            Ok((x.iter().map(usize::to_string).collect(), None))
        })
        .collect::<Result<_>>()?;
    render_rows(SAMPLES_HEADER, names, None, &rows)
}

pub fn parse_samples(text: &str) -> Result<(Vec<Assignment>, Vec<String>)> {
    let (names, rows) = parse_rows(text, SAMPLES_HEADER)?;
    let samples = rows
        .into_iter()
        .map(|(pos, fields)| {
            if fields.len() != names.len() {
                return Err(perr(pos[0], format!("expected {} fields, found {}", names.len(), fields.len())));
            }
            parse_labels(pos[0], &fields)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, names))
}

/// Comma- or whitespace-separated label indices.
pub fn parse_assignment(text: &str) -> Result<Assignment> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::InvalidAssignment(format!("`{t}` is not a label index")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Assignment::new)
}

pub fn render_template_spec(spec: &TemplateSpec) -> String {
    format!(
        "{TEMPLATE_HEADER}\nbackbone: {}\ndepth: {}\nbase_width: {}\nresolution: {}\nin_channels: {}\n",
        spec.backbone, spec.depth, spec.base_width, spec.resolution, spec.in_channels
    )
}

fn apply_key(spec: &mut TemplateSpec, line: usize, key: &str, value: &str) -> Result<()> {
    let num = || {
        value
            .parse::<usize>()
            .map_err(|_| perr(line, format!("`{value}` is not a positive integer")))
    };
    match key {
        "backbone" => spec.backbone = value.parse::<Backbone>().map_err(|e| perr(line, e.to_string()))?,
        "depth" => spec.depth = num()?,
        "base" | "base_width" => spec.base_width = num()?,
        "resolution" => spec.resolution = num()?,
        "in_channels" => spec.in_channels = num()?,
        _ => return Err(perr(line, format!("unknown template key `{key}`"))),
    }
    Ok(())
}

pub fn parse_template_spec(text: &str) -> Result<TemplateSpec> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, l)) if l == TEMPLATE_HEADER => {}
        Some((no, l)) => return Err(perr(no, format!("expected `{TEMPLATE_HEADER}`, found `{l}`"))),
        None => return Err(perr(1, "empty file")),
    }
    let mut spec = TemplateSpec::new(Backbone::Unet, 5);
    for (no, l) in lines {
        let (k, v) = l
            .split_once(':')
            .ok_or_else(|| perr(no, format!("expected `key: value`, found `{l}`")))?;
        apply_key(&mut spec, no, k.trim(), v.trim())?;
    }
    Ok(spec)
}

/// Inline form `backbone[:key=value,...]`, e.g. `unet:depth=2,base=8`.
pub fn parse_inline_template(text: &str) -> Result<TemplateSpec> {
    let (head, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut spec = TemplateSpec::new(head.trim().parse()?, 5);
    for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("template parameter `{part}` lacks `=`")))?;
        apply_key(&mut spec, 1, k.trim(), v.trim())?;
    }
    Ok(spec)
}

/// Reads a template file if `arg` names one, otherwise parses it inline.
pub fn load_template(arg: &str) -> Result<Template> {
    let path = Path::new(arg);
    let spec = if path.is_file() {
        parse_template_spec(&fs::read_to_string(path)?)?
    } else {
        parse_inline_template(arg)?
    };
    spec.build()
}
