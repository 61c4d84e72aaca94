//! Model files.
//!
//! ```text
//! # comments start with '#'
//! [model]
//! n = 3
//! kernel = blocks          # single-site | mean-field | blocks | matrix
//!
//! [J]                      # n rows of n numbers, symmetric; default 0
//! 0.0 0.1 0.0
//! 0.1 0.0 0.2
//! 0.0 0.2 0.0
//!
//! [h]                      # n numbers; default 0
//! 0.1 0.1 -0.3
//!
//! [partition]              # one block per line, 1-based sites
//! 1 2
//! 3
//!
//! [kernel]                 # only for kernel = matrix: n rows of n numbers
//! ```
//!
//! The `[partition]` section is required for `kernel = blocks`. For the other
//! kernels it is optional, but when present it must coincide with the
//! irreducible components of the kernel.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::{build_transport_kernel, CollisionContext, KernelSpec, TransportKernel};
use crate::spin::{FieldVector, InteractionMatrix, SitePartition};

#[derive(Debug, Clone)]
pub struct Model {
    pub j: InteractionMatrix,
    pub h: FieldVector,
    pub kernel_spec: KernelSpec,
    pub kernel: TransportKernel,
}

impl Model {
    pub fn n(&self) -> usize {
        self.j.n()
    }

    /// Conservation partition `A(K)`.
    pub fn partition(&self) -> &SitePartition {
        self.kernel.components()
    }

    pub fn context(&self) -> Result<CollisionContext> {
        CollisionContext::new(self.j.clone(), self.kernel.clone())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        parse_model(&text, &path.display().to_string())
    }
}

#[derive(PartialEq)]
enum Section {
    None,
    Model,
    J,
    H,
    Partition,
    Kernel,
}

fn numbers(line: &str, origin: &str, ln: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                path: origin.into(),
                line: ln,
                msg: format!("'{t}' is not a number"),
            })
        })
        .collect()
}

/// Parse model text; `origin` labels diagnostics.
pub fn parse_model(text: &str, origin: &str) -> Result<Model> {
    let perr = |line: usize, msg: String| Error::Parse { path: origin.into(), line, msg };
    let mut section = Section::None;
    let mut n: Option<usize> = None;
    let mut kernel_name: Option<(String, usize)> = None;
    let mut j_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut h_vals: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut blocks: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut k_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = match line {
                "[model]" => Section::Model,
                "[J]" => Section::J,
                "[h]" => Section::H,
                "[partition]" => Section::Partition,
                "[kernel]" => Section::Kernel,
                other => return Err(perr(ln, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(perr(ln, "content before the first section".into())),
            Section::Model => {
                let (key, val) = line
                    .split_once('=')
                    .ok_or_else(|| perr(ln, format!("expected 'key = value', got '{line}'")))?;
                match key.trim() {
                    "n" => {
                        let v = val.trim().parse::<usize>().map_err(|_| perr(ln, format!("bad n '{}'", val.trim())))?;
                        n = Some(v);
                    }
                    "kernel" => kernel_name = Some((val.trim().to_string(), ln)),
                    other => return Err(perr(ln, format!("unknown key '{other}'"))),
                }
            }
            Section::J => j_rows.push((ln, numbers(line, origin, ln)?)),
            Section::H => h_vals.push((ln, numbers(line, origin, ln)?)),
            Section::Kernel => k_rows.push((ln, numbers(line, origin, ln)?)),
            Section::Partition => {
                let sites = line
                    .split_whitespace()
                    .map(|t| match t.parse::<usize>() {
                        Ok(s) if s >= 1 => Ok(s - 1),
                        _ => Err(perr(ln, format!("'{t}' is not a 1-based site index"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                blocks.push((ln, sites));
            }
        }
    }
    let n = n.ok_or_else(|| perr(0, "missing 'n' in [model]".into()))?;
    let matrix = |rows: &[(usize, Vec<f64>)], what: &str| -> Result<Vec<f64>> {
        if rows.len() != n {
            let line = rows.last().map_or(0, |r| r.0);
            return Err(perr(line, format!("{what} needs {n} rows, found {}", rows.len())));
        }
        let mut out = Vec::with_capacity(n * n);
        for (ln, r) in rows {
            if r.len() != n {
                return Err(perr(*ln, format!("{what} row has {} entries, expected {n}", r.len())));
            }
            out.extend_from_slice(r);
        }
        Ok(out)
    };
    let j = if j_rows.is_empty() {
        InteractionMatrix::zeros(n)?
    } else {
        let data = matrix(&j_rows, "J")?;
        InteractionMatrix::new(n, data).map_err(|e| perr(j_rows[0].0, e.to_string()))?
    };
    let h = if h_vals.is_empty() {
        FieldVector::zeros(n)
    } else {
        let v: Vec<f64> = h_vals.iter().flat_map(|(_, r)| r.iter().copied()).collect();
        if v.len() != n {
            return Err(perr(h_vals[0].0, format!("h needs {n} entries, found {}", v.len())));
        }
        FieldVector(v)
    };
    let partition = if blocks.is_empty() {
        None
    } else {
        Some(
            SitePartition::new(n, blocks.iter().map(|b| b.1.clone()).collect())
                .map_err(|e| perr(blocks[0].0, e.to_string()))?,
        )
    };
    let (kname, kline) = kernel_name.ok_or_else(|| perr(0, "missing 'kernel' in [model]".into()))?;
    let kernel_spec = match kname.as_str() {
        "single-site" => KernelSpec::SingleSite,
        "mean-field" => KernelSpec::MeanField,
        "blocks" => KernelSpec::Blocks(
            partition.clone().ok_or_else(|| perr(kline, "kernel = blocks needs a [partition] section".into()))?,
        ),
        "matrix" => {
            if k_rows.is_empty() {
                return Err(perr(kline, "kernel = matrix needs a [kernel] section".into()));
            }
            KernelSpec::Matrix(matrix(&k_rows, "kernel")?)
        }
        other => return Err(perr(kline, format!("unknown kernel '{other}'"))),
    };
    let kernel = build_transport_kernel(n, &kernel_spec).map_err(|e| perr(kline, e.to_string()))?;
    if let Some(p) = &partition {
        if p != kernel.components() {
            return Err(perr(blocks[0].0, "partition differs from the irreducible components of the kernel".into()));
        }
    }
    Ok(Model { j, h, kernel_spec, kernel })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = "
# two sites, one block
[model]
n = 2
kernel = blocks
[J]
0.0 0.2
0.2 0.0
[h]
0.1 0.1
[partition]
1 2
";

    #[test]
    fn parses_demo() {
        let m = parse_model(DEMO, "demo").unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.j.get(0, 1), 0.2);
        assert_eq!(m.h.0, vec![0.1, 0.1]);
        assert_eq!(m.partition().len(), 1);
    }

    #[test]
    fn asymmetric_j_diagnostic() {
        let text = DEMO.replace("0.2 0.0\n[h]", "0.3 0.0\n[h]");
        let e = parse_model(&text, "demo").unwrap_err().to_string();
        assert!(e.contains("(1,2)"), "{e}");
    }

    #[test]
    fn defaults_and_kernels() {
        let m = parse_model("[model]\nn = 3\nkernel = mean-field\n", "x").unwrap();
        assert!(m.j.is_zero());
        assert_eq!(m.partition().len(), 1);
        let m = parse_model("[model]\nn=2\nkernel=matrix\n[kernel]\n0.5 0.5\n0.5 0.5\n", "x").unwrap();
        assert_eq!(m.kernel.as_slice(), &[0.5; 4]);
    }

    #[test]
    fn error_cases() {
        assert!(parse_model("[model]\nn = 2\nkernel = blocks\n", "x").is_err());
        assert!(parse_model("[model]\nn = 2\nkernel = wat\n", "x").is_err());
        assert!(parse_model("[model]\nn = 2\nkernel = single-site\n[partition]\n1 2\n", "x").is_err());
        let e = parse_model("[model]\nn = 2\nkernel = mean-field\n[J]\n0 x\n0 0\n", "f.model").unwrap_err();
        assert!(e.to_string().starts_with("f.model:5:"), "{e}");
    }

    #[test]
    fn missing_file_names_path() {
        let e = Model::load(Path::new("/nonexistent/m.model")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/m.model"));
    }
}
