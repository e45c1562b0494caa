//! Plain-text problem files.
//!
//! A problem file is line oriented:
//!
//! ```text
//! nrirls-problem v1
//! family=phase_retrieval
//! k=1
//! ...                      # metadata, one key=value per line
//! [x_star]
//! 0.0e0,...                # one comma-separated line per vector block
//! [support]
//! 0,5,7
//! [y]
//! ...
//! [vectors]                # matrix blocks: one line per row
//! ...
//! ```
//!
//! Floats are written with 17 significant digits, so a write/read round
//! trip reproduces the instance bit for bit. Matrix blocks per family:
//! `[vectors]` (phase retrieval), `[a1]` + `[z_ref]` (perturbed sensing),
//! none for the toy map.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Family, PerturbedRip, PhaseRetrieval, ProblemInstance, ProblemMap, Simple1d};
use crate::error::{Error, Result};
use crate::util::fmt_f64;

const MAGIC: &str = "nrirls-problem v1";

fn vector_line(v: &DVector<f64>) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

fn matrix_lines(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
}

/// Render an instance in the problem-file format.
pub fn write_instance(instance: &ProblemInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    for (k, v) in &instance.meta {
        let _ = writeln!(out, "{k}={v}");
    }
    let _ = writeln!(out, "[x_star]");
    let _ = writeln!(out, "{}", vector_line(&instance.x_star));
    if let Some(support) = &instance.support {
        let _ = writeln!(out, "[support]");
        let line: Vec<String> = support.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    let _ = writeln!(out, "[y]");
    let _ = writeln!(out, "{}", vector_line(&instance.y));
    match &instance.map {
        ProblemMap::Simple1d(_) => {}
        ProblemMap::PerturbedRip(map) => {
            let _ = writeln!(out, "[a1]");
            matrix_lines(&mut out, map.a1());
            let _ = writeln!(out, "[z_ref]");
            let _ = writeln!(out, "{}", vector_line(map.z_ref()));
        }
        ProblemMap::PhaseRetrieval(map) => {
            let _ = writeln!(out, "[vectors]");
            matrix_lines(&mut out, map.vectors());
        }
    }
    out
}

pub fn save_instance(instance: &ProblemInstance, path: &Path) -> Result<()> {
    std::fs::write(path, write_instance(instance))?;
    Ok(())
}

struct Block {
    start_line: usize,
    rows: Vec<(usize, String)>,
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64_row(path: &str, line_no: usize, line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(path, line_no, format!("bad number `{}`", tok.trim())))
        })
        .collect()
}

fn block_vector(path: &str, block: &Block) -> Result<DVector<f64>> {
    if block.rows.len() != 1 {
        return Err(parse_err(
            path,
            block.start_line,
            "expected exactly one data line in vector block",
        ));
    }
    let (line_no, line) = &block.rows[0];
    Ok(DVector::from_vec(parse_f64_row(path, *line_no, line)?))
}

fn block_matrix(path: &str, block: &Block) -> Result<DMatrix<f64>> {
    if block.rows.is_empty() {
        return Err(parse_err(path, block.start_line, "empty matrix block"));
    }
    let mut data: Vec<Vec<f64>> = Vec::with_capacity(block.rows.len());
    let mut width = None;
    for (line_no, line) in &block.rows {
        let row = parse_f64_row(path, *line_no, line)?;
        if let Some(w) = width {
            if row.len() != w {
                return Err(parse_err(path, *line_no, "ragged matrix row"));
            }
        } else {
            width = Some(row.len());
        }
        data.push(row);
    }
    let (rows, cols) = (data.len(), width.unwrap());
    Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
}

/// Parse a problem file. Errors carry the offending line number.
pub fn parse_instance(path_label: &str, text: &str) -> Result<ProblemInstance> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let Some((_, first)) = lines.next() else {
        return Err(parse_err(path_label, 1, "empty file"));
    };
    if first.trim() != MAGIC {
        return Err(parse_err(
            path_label,
            1,
            format!("expected header `{MAGIC}`"),
        ));
    }

    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    let mut blocks: BTreeMap<String, Block> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (line_no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if blocks.contains_key(&name) {
                return Err(parse_err(path_label, line_no, format!("duplicate block [{name}]")));
            }
            blocks.insert(
                name.clone(),
                Block {
                    start_line: line_no,
                    rows: Vec::new(),
                },
            );
            current = Some(name);
        } else if let Some(name) = &current {
            blocks
                .get_mut(name)
                .unwrap()
                .rows
                .push((line_no, line.to_string()));
        } else if let Some((k, v)) = line.split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            return Err(parse_err(
                path_label,
                line_no,
                "expected key=value or [block]",
            ));
        }
    }

    let family_name = meta
        .get("family")
        .ok_or_else(|| parse_err(path_label, 1, "missing `family` key"))?;
    let family = Family::parse(family_name)
        .ok_or_else(|| parse_err(path_label, 1, format!("unknown family `{family_name}`")))?;

    let take = |name: &str| -> Result<&Block> {
        blocks
            .get(name)
            .ok_or_else(|| parse_err(path_label, 1, format!("missing block [{name}]")))
    };

    let x_star = block_vector(path_label, take("x_star")?)?;
    let y = block_vector(path_label, take("y")?)?;
    let support = match blocks.get("support") {
        Some(block) => {
            if block.rows.len() != 1 {
                return Err(parse_err(path_label, block.start_line, "expected one support line"));
            }
            let (line_no, line) = &block.rows[0];
            let support = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<usize>().map_err(|_| {
                        parse_err(path_label, *line_no, format!("bad index `{}`", tok.trim()))
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            Some(support)
        }
        None => None,
    };

    let map = match family {
        Family::Simple1d => ProblemMap::Simple1d(Simple1d),
        Family::PerturbedRip => {
            let a1 = block_matrix(path_label, take("a1")?)?;
            let z_ref = block_vector(path_label, take("z_ref")?)?;
            let rho: f64 = meta
                .get("rho")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse_err(path_label, 1, "missing or bad `rho` key"))?;
            ProblemMap::PerturbedRip(PerturbedRip::from_parts(a1, rho, z_ref)?)
        }
        Family::PhaseRetrieval => {
            let vectors = block_matrix(path_label, take("vectors")?)?;
            ProblemMap::PhaseRetrieval(PhaseRetrieval::from_vectors(vectors))
        }
    };

    use crate::model::ResidualMap as _;
    if y.len() != map.dim_out() {
        return Err(parse_err(
            path_label,
            take("y")?.start_line,
            format!("y has length {}, map expects {}", y.len(), map.dim_out()),
        ));
    }

    let seed = meta.get("seed").and_then(|v| v.parse().ok()).unwrap_or(0);
    Ok(ProblemInstance {
        family,
        map,
        y,
        x_star,
        support,
        seed,
        meta,
    })
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&path.display().to_string(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ResidualMap;
    use crate::problems::{make_instance, InstanceParams, NoiseSpec};

    #[test]
    fn round_trip_is_bitwise() {
        let params = InstanceParams::phase_retrieval(8, 6, 2, 0.5, 1.0);
        let noise = NoiseSpec {
            alpha_p: 0.3,
            ..Default::default()
        };
        let inst = make_instance(&params, Some(&noise), 31).unwrap();
        let text = write_instance(&inst);
        let back = parse_instance("mem", &text).unwrap();
        assert_eq!(inst.y, back.y);
        assert_eq!(inst.x_star, back.x_star);
        assert_eq!(inst.support, back.support);
        assert_eq!(inst.meta, back.meta);
        let x = DVector::from_vec(vec![0.3, -0.4]);
        let sup = back.support.clone().unwrap();
        let padded = crate::problems::zero_pad(&x, &sup, 8);
        assert_eq!(inst.map.eval(&padded), back.map.eval(&padded));
    }

    #[test]
    fn round_trip_perturbed_rip() {
        let params = InstanceParams::perturbed_rip(10, 6, 2, 2.5, 1.5);
        let inst = make_instance(&params, None, 3).unwrap();
        let text = write_instance(&inst);
        let back = parse_instance("mem", &text).unwrap();
        let z = DVector::from_fn(10, |i, _| (i as f64) * 0.1 - 0.4);
        assert_eq!(inst.map.eval(&z), back.map.eval(&z));
    }

    #[test]
    fn malformed_files_name_the_line() {
        let bad_header = "not-a-problem\nfamily=simple_1d\n";
        match parse_instance("f", bad_header) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            Err(other) => panic!("unexpected: {other:?}"),
            Ok(_) => panic!("parse should fail"),
        }

        let inst = make_instance(&InstanceParams::simple_1d([0.0, 0.9], 1.0), None, 1).unwrap();
        let clean = write_instance(&inst);
        let mut text = clean.clone();
        text.push_str("[y]\n1,2\n");
        match parse_instance("f", &text) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("duplicate"), "{msg}"),
            Err(other) => panic!("unexpected: {other:?}"),
            Ok(_) => panic!("parse should fail"),
        }

        let garbled = clean.replace("9.0000000000000002e-1", "nine-tenths");
        assert_ne!(garbled, clean);
        match parse_instance("f", &garbled) {
            Err(Error::Parse { line, msg, .. }) => {
                assert!(msg.contains("nine-tenths"), "{msg}");
                assert!(line > 1);
            }
            Err(other) => panic!("unexpected: {other:?}"),
            Ok(_) => panic!("parse should fail"),
        }
    }
}
