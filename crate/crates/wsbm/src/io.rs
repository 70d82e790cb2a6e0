//! Reading of the `.spm` edge-list format and the three output writers
//! (plain text, R script, Octave/MATLAB script).
//!
//! `.spm` lines are whitespace-separated: two 1-based node indices, a real
//! weight, then optional covariate columns of constant arity. Absent dyads
//! mean weight zero — but only when no covariates are used; with covariates
//! every dyad line must be present. Blank lines and lines starting with `#`
//! are skipped. All emitted numbers carry 17 significant digits so a write
//! followed by a parse reproduces every value bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::{dyad_count, dyad_from_index, dyad_index, CovariateTable, Network};
use crate::models::Family;
use crate::selection::SweepResult;

/// 17-significant-digit decimal: exact round trip for every finite f64.
pub(crate) fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses `.spm` text. With `symmetric` each dyad may appear once in either
/// orientation; repeated dyads must carry identical values.
pub fn parse_spm<R: BufRead>(reader: R, symmetric: bool) -> Result<Network> {
    struct Raw {
        line: usize,
        i: usize,
        j: usize,
        w: f64,
        y: Vec<f64>,
    }

    let mut rows: Vec<Raw> = Vec::new();
    let mut p: Option<usize> = None;
    let mut n = 0usize;

    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected at least 3 columns, got {}", tokens.len()),
            });
        }
        let parse_index = |tok: &str| -> Result<usize> {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("node index {tok:?} is not a positive integer"),
            })
        };
        let i = parse_index(tokens[0])?;
        let j = parse_index(tokens[1])?;
        if i < 1 || j < 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: "node indexes must start from 1".into(),
            });
        }
        if i == j {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("self-loop ({i}, {i}) is not supported"),
            });
        }
        let mut nums = Vec::with_capacity(tokens.len() - 2);
        for tok in &tokens[2..] {
            nums.push(tok.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("value {tok:?} is not a number"),
            })?);
        }
        let arity = nums.len() - 1;
        match p {
            None => p = Some(arity),
            Some(prev) if prev != arity => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "every edge must carry the same number of covariates: \
                         expected {prev}, got {arity}"
                    ),
                });
            }
            _ => {}
        }
        n = n.max(i).max(j);
        rows.push(Raw { line: line_no, i: i - 1, j: j - 1, w: nums[0], y: nums[1..].to_vec() });
    }

    let p = p.unwrap_or(0);
    let directed = !symmetric;
    if n == 0 {
        return Ok(Network { n: 0, directed, weights: vec![], covariates: None });
    }

    let n_dyads = dyad_count(n, directed);
    let mut weight_at: Vec<Option<f64>> = vec![None; n_dyads];
    let mut cov_data = if p > 0 { vec![0.0; n_dyads * p] } else { Vec::new() };
    let mut seen = vec![false; n_dyads];

    for raw in &rows {
        let idx = dyad_index(n, directed, raw.i, raw.j);
        if seen[idx] {
            let same_w = weight_at[idx] == Some(raw.w);
            let same_y = p == 0 || cov_data[idx * p..(idx + 1) * p] == raw.y[..];
            if !(same_w && same_y) {
                return Err(Error::ContradictoryDuplicate {
                    line: raw.line,
                    i: raw.i + 1,
                    j: raw.j + 1,
                });
            }
            continue;
        }
        seen[idx] = true;
        weight_at[idx] = Some(raw.w);
        if p > 0 {
            cov_data[idx * p..(idx + 1) * p].copy_from_slice(&raw.y);
        }
    }

    if p > 0 {
        if let Some(idx) = seen.iter().position(|&s| !s) {
            let (i, j) = dyad_from_index(n, directed, idx);
            return Err(Error::MissingDyad { i: i + 1, j: j + 1 });
        }
    }

    let mut weights = Vec::new();
    for (idx, w) in weight_at.into_iter().enumerate() {
        if let Some(w) = w {
            if w != 0.0 {
                let (i, j) = dyad_from_index(n, directed, idx);
                weights.push((i as u32, j as u32, w));
            }
        }
    }

    Ok(Network {
        n,
        directed,
        weights,
        covariates: (p > 0).then_some(CovariateTable { p, data: cov_data }),
    })
}

/// Writes a network back out in `.spm` form: stored dyads only when there are
/// no covariates, every dyad otherwise.
pub fn write_spm<W: Write>(network: &Network, out: &mut W) -> Result<()> {
    match &network.covariates {
        None => {
            for &(i, j, w) in &network.weights {
                writeln!(out, "{} {} {}", i + 1, j + 1, fmt_g17(w))?;
            }
        }
        Some(cov) => {
            let mut stored = network.weights.iter().peekable();
            for (idx, (i, j)) in network.all_dyads().enumerate() {
                let w = match stored.peek() {
                    Some(&&(a, b, w))
                        if dyad_index(network.n, network.directed, a as usize, b as usize)
                            == idx =>
                    {
                        stored.next();
                        w
                    }
                    _ => 0.0,
                };
                let mut line = format!("{} {} {}", i + 1, j + 1, fmt_g17(w));
                for v in &cov.data[idx * cov.p..(idx + 1) * cov.p] {
                    line.push(' ');
                    line.push_str(&fmt_g17(*v));
                }
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    R,
    /// `matlab` and `octave` are synonymous.
    Octave,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<OutputFormat> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "R" => Ok(OutputFormat::R),
            "matlab" | "octave" => Ok(OutputFormat::Octave),
            other => {
                Err(Error::InvalidParameters(format!("unknown output format {other:?}")))
            }
        }
    }
}

fn connectivity_name(family: Family) -> &'static str {
    match family {
        Family::Bernoulli => "pi",
        Family::Poisson => "lambda",
        Family::Gaussian => "mu",
    }
}

/// Serializes every explored Q: alpha, the law parameters, tau, the
/// pseudo-likelihood and the ICL.
pub fn write_output<W: Write>(
    sweep: &SweepResult,
    format: OutputFormat,
    out: &mut W,
) -> Result<()> {
    match format {
        OutputFormat::Text => write_text(sweep, out),
        OutputFormat::R => write_r(sweep, out),
        OutputFormat::Octave => write_octave(sweep, out),
    }
}

fn write_text<W: Write>(sweep: &SweepResult, out: &mut W) -> Result<()> {
    let spec = sweep.per_q[0].spec;
    writeln!(out, "# model: {spec}")?;
    writeln!(out, "# directed: {}", sweep.per_q[0].directed)?;
    writeln!(out, "# selected_Q: {}", sweep.selected_q)?;
    for f in &sweep.per_q {
        let q = f.q;
        writeln!(out)?;
        writeln!(out, "Q = {q}")?;
        writeln!(out, "# converged: {}, iterations: {}, init: {}", f.converged, f.iterations, f.init_source)?;
        if f.degenerate {
            writeln!(out, "# degenerate: true")?;
        }
        writeln!(out, "pseudo_likelihood = {}", fmt_g17(f.objective))?;
        writeln!(out, "ICL = {}", fmt_g17(f.icl))?;
        let alpha: Vec<String> = f.params.alpha.iter().map(|&a| fmt_g17(a)).collect();
        writeln!(out, "alpha = {}", alpha.join(" "))?;
        writeln!(out, "{} =", connectivity_name(spec.family))?;
        for r in 0..q {
            let row: Vec<String> =
                (0..q).map(|c| fmt_g17(f.params.connectivity[(r, c)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        if let Some(s2) = f.params.sigma2 {
            writeln!(out, "sigma2 = {}", fmt_g17(s2))?;
        }
        if let Some(beta) = &f.params.beta {
            let b: Vec<String> = beta.iter().map(|&v| fmt_g17(v)).collect();
            writeln!(out, "beta = {}", b.join(" "))?;
        }
        if let Some(bs) = &f.params.beta_ql {
            for r in 0..q {
                for c in 0..q {
                    let b: Vec<String> =
                        bs[r * q + c].iter().map(|&v| fmt_g17(v)).collect();
                    writeln!(out, "beta_ql[{}][{}] = {}", r + 1, c + 1, b.join(" "))?;
                }
            }
        }
        writeln!(out, "tau =")?;
        for i in 0..f.n {
            let row: Vec<String> =
                (0..q).map(|c| fmt_g17(f.tau.matrix()[(i, c)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

fn r_vector(values: impl Iterator<Item = f64>) -> String {
    let parts: Vec<String> = values.map(fmt_g17).collect();
    format!("c({})", parts.join(", "))
}

fn write_r<W: Write>(sweep: &SweepResult, out: &mut W) -> Result<()> {
    let spec = sweep.per_q[0].spec;
    writeln!(out, "wsbm <- list()")?;
    writeln!(out, "wsbm[[\"model\"]] <- \"{spec}\"")?;
    writeln!(out, "wsbm[[\"selected_Q\"]] <- {}", sweep.selected_q)?;
    for f in &sweep.per_q {
        let q = f.q;
        let key = format!("wsbm[[\"Q{q}\"]]");
        writeln!(out, "{key} <- list()")?;
        writeln!(out, "{key}[[\"alpha\"]] <- {}", r_vector(f.params.alpha.iter().copied()))?;
        // matrices listed row-major with byrow=TRUE
        let conn = (0..q).flat_map(|r| (0..q).map(move |c| (r, c)));
        writeln!(
            out,
            "{key}[[\"{}\"]] <- matrix({}, nrow={q}, ncol={q}, byrow=TRUE)",
            connectivity_name(spec.family),
            r_vector(conn.map(|(r, c)| f.params.connectivity[(r, c)]))
        )?;
        if let Some(s2) = f.params.sigma2 {
            writeln!(out, "{key}[[\"sigma2\"]] <- {}", fmt_g17(s2))?;
        }
        if let Some(beta) = &f.params.beta {
            writeln!(out, "{key}[[\"beta\"]] <- {}", r_vector(beta.iter().copied()))?;
        }
        if let Some(bs) = &f.params.beta_ql {
            let p = f.p;
            // column-major fill for dim = c(Q, Q, p)
            let mut vals = Vec::with_capacity(q * q * p);
            for k in 0..p {
                for c in 0..q {
                    for r in 0..q {
                        vals.push(bs[r * q + c][k]);
                    }
                }
            }
            writeln!(
                out,
                "{key}[[\"beta_ql\"]] <- array({}, dim=c({q}, {q}, {p}))",
                r_vector(vals.into_iter())
            )?;
        }
        let n = f.n;
        let tau = (0..n).flat_map(|i| (0..q).map(move |c| (i, c)));
        writeln!(
            out,
            "{key}[[\"tau\"]] <- matrix({}, nrow={n}, ncol={q}, byrow=TRUE)",
            r_vector(tau.map(|(i, c)| f.tau.matrix()[(i, c)]))
        )?;
        writeln!(out, "{key}[[\"pseudo_likelihood\"]] <- {}", fmt_g17(f.objective))?;
        writeln!(out, "{key}[[\"ICL\"]] <- {}", fmt_g17(f.icl))?;
    }
    Ok(())
}

fn octave_matrix(rows: usize, cols: usize, get: impl Fn(usize, usize) -> f64) -> String {
    let mut body = String::from("[");
    for r in 0..rows {
        if r > 0 {
            body.push_str("; ");
        }
        for c in 0..cols {
            if c > 0 {
                body.push(' ');
            }
            body.push_str(&fmt_g17(get(r, c)));
        }
    }
    body.push(']');
    body
}

fn write_octave<W: Write>(sweep: &SweepResult, out: &mut W) -> Result<()> {
    let spec = sweep.per_q[0].spec;
    writeln!(out, "wsbm_model = '{spec}';")?;
    writeln!(out, "wsbm_selected_Q = {};", sweep.selected_q)?;
    for (k, f) in sweep.per_q.iter().enumerate() {
        let s = k + 1;
        let q = f.q;
        writeln!(out, "wsbm({s}).Q = {q};")?;
        writeln!(
            out,
            "wsbm({s}).alpha = {};",
            octave_matrix(1, q, |_, c| f.params.alpha[c])
        )?;
        writeln!(
            out,
            "wsbm({s}).{} = {};",
            connectivity_name(spec.family),
            octave_matrix(q, q, |r, c| f.params.connectivity[(r, c)])
        )?;
        if let Some(s2) = f.params.sigma2 {
            writeln!(out, "wsbm({s}).sigma2 = {};", fmt_g17(s2))?;
        }
        if let Some(beta) = &f.params.beta {
            writeln!(
                out,
                "wsbm({s}).beta = {};",
                octave_matrix(1, beta.len(), |_, c| beta[c])
            )?;
        }
        if let Some(bs) = &f.params.beta_ql {
            for e in 0..f.p {
                writeln!(
                    out,
                    "wsbm({s}).beta_ql(:,:,{}) = {};",
                    e + 1,
                    octave_matrix(q, q, |r, c| bs[r * q + c][e])
                )?;
            }
        }
        writeln!(
            out,
            "wsbm({s}).tau = {};",
            octave_matrix(f.n, q, |r, c| f.tau.matrix()[(r, c)])
        )?;
        writeln!(out, "wsbm({s}).pseudo_likelihood = {};", fmt_g17(f.objective))?;
        writeln!(out, "wsbm({s}).ICL = {};", fmt_g17(f.icl))?;
    }
    Ok(())
}
