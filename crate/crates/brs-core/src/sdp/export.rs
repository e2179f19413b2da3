//! Sparse text export of an [`SdpProblem`] (`.dat-s`).
//!
//! The file encodes the problem on the standard form's dual side:
//!
//!   F_i = A_i ⊕ diag(B_i, −B_i)       (one matrix per equality row)
//!   F₀  = −C ⊕ diag(−c_f, +c_f)
//!   objective line = the equality right-hand sides b
//!
//! so that an external solver's `max tr(F₀ Y) s.t. tr(F_i Y) = b_i, Y ⪰ 0`
//! equals the negated optimum of our minimization. Free variables become one
//! trailing diagonal block of size 2·free_vars, written negative and split
//! into positive and negative parts. Indices are 1-based and
//! upper-triangular; output is byte-deterministic for identical input.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{EqRow, SdpProblem};

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

/// Merged, (block, r, c)-sorted copy of a row's block entries.
fn canonical_entries(entries: &[(usize, usize, usize, f64)]) -> Vec<(usize, usize, usize, f64)> {
    let mut map: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for &(b, r, c, v) in entries {
        *map.entry((b, r, c)).or_insert(0.0) += v;
    }
    map.into_iter()
        .filter(|&(_, v)| v != 0.0)
        .map(|((b, r, c), v)| (b, r, c, v))
        .collect()
}

fn canonical_free(entries: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut map: BTreeMap<usize, f64> = BTreeMap::new();
    for &(k, v) in entries {
        *map.entry(k).or_insert(0.0) += v;
    }
    map.into_iter().filter(|&(_, v)| v != 0.0).collect()
}

pub fn export_standard_form(prob: &SdpProblem) -> String {
    let m = prob.equalities.len();
    let nb = prob.psd_blocks.len();
    let nf = prob.free_vars;
    let has_free = nf > 0;

    let mut out = String::new();
    let _ = writeln!(out, "{m}");
    let _ = writeln!(out, "{}", nb + usize::from(has_free));
    let sizes: Vec<String> = prob
        .psd_blocks
        .iter()
        .map(|(_, n)| n.to_string())
        .chain(has_free.then(|| format!("-{}", 2 * nf)))
        .collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let obj: Vec<String> = prob.equalities.iter().map(|e| fmt_f(e.rhs)).collect();
    let _ = writeln!(out, "{}", obj.join(" "));

    let free_blk = nb + 1; // 1-based index of the free diagonal block
    let mut entry = |matno: usize, blk: usize, i: usize, j: usize, v: f64| {
        let _ = writeln!(out, "{matno} {blk} {i} {j} {}", fmt_f(v));
    };

    // F₀ = −C ⊕ diag(−c_f, +c_f)
    for (bi, cost) in prob.block_costs.iter().enumerate() {
        for (_, r, c, v) in canonical_entries(
            &cost.iter().map(|&(r, c, v)| (bi, r, c, v)).collect::<Vec<_>>(),
        ) {
            entry(0, bi + 1, r + 1, c + 1, -v);
        }
    }
    for (k, &v) in prob.objective_free.iter().enumerate() {
        if v != 0.0 {
            entry(0, free_blk, k + 1, k + 1, -v);
            entry(0, free_blk, nf + k + 1, nf + k + 1, v);
        }
    }

    // F_i = A_i ⊕ diag(B_i, −B_i)
    for (i, eq) in prob.equalities.iter().enumerate() {
        for (bi, r, c, v) in canonical_entries(&eq.block_entries) {
            entry(i + 1, bi + 1, r + 1, c + 1, v);
        }
        for (k, v) in canonical_free(&eq.free_entries) {
            entry(i + 1, free_blk, k + 1, k + 1, v);
            entry(i + 1, free_blk, nf + k + 1, nf + k + 1, -v);
        }
    }
    out
}

/// Inverse of [`export_standard_form`], used by round-trip tests. Block
/// labels are not part of the format and come back as `block<k>`.
pub fn parse_standard_form(text: &str) -> Result<SdpProblem, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('*') && !l.starts_with('"'));

    let m: usize = lines
        .next()
        .ok_or("missing m line")?
        .parse()
        .map_err(|e| format!("bad m line: {e}"))?;
    let nblocks: usize = lines
        .next()
        .ok_or("missing nblocks line")?
        .parse()
        .map_err(|e| format!("bad nblocks line: {e}"))?;
    let sizes: Vec<i64> = lines
        .next()
        .ok_or("missing block sizes line")?
        .split_whitespace()
        .map(|t| t.parse::<i64>().map_err(|e| format!("bad block size `{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    if sizes.len() != nblocks {
        return Err(format!("expected {nblocks} block sizes, got {}", sizes.len()));
    }
    let b: Vec<f64> = lines
        .next()
        .ok_or("missing objective line")?
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad objective value `{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    if b.len() != m {
        return Err(format!("expected {m} objective values, got {}", b.len()));
    }

    // The trailing negative block, if present, is the split free block.
    let (psd_sizes, nf) = match sizes.split_last() {
        Some((&last, rest)) if last < 0 => {
            if rest.iter().any(|&s| s <= 0) {
                return Err("only the trailing block may be diagonal".into());
            }
            let twice = (-last) as usize;
            if !twice.is_multiple_of(2) {
                return Err("free block size must be even".into());
            }
            (rest.to_vec(), twice / 2)
        }
        _ => {
            if sizes.iter().any(|&s| s <= 0) {
                return Err("only the trailing block may be diagonal".into());
            }
            (sizes.clone(), 0)
        }
    };
    let nb = psd_sizes.len();

    let mut block_costs: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nb];
    let mut objective_free = vec![0.0; nf];
    let mut equalities: Vec<EqRow> =
        (0..m).map(|i| EqRow { rhs: b[i], ..Default::default() }).collect();
    // Mirror halves of the free block, checked for ± consistency at the end.
    let mut free_plus: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); m + 1];
    let mut free_minus: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); m + 1];

    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(format!("bad entry line `{line}`"));
        }
        let matno: usize = toks[0].parse().map_err(|e| format!("bad matno: {e}"))?;
        let blk: usize = toks[1].parse().map_err(|e| format!("bad blkno: {e}"))?;
        let i: usize = toks[2].parse().map_err(|e| format!("bad i: {e}"))?;
        let j: usize = toks[3].parse().map_err(|e| format!("bad j: {e}"))?;
        let v: f64 = toks[4].parse().map_err(|e| format!("bad value: {e}"))?;
        if matno > m || blk == 0 || blk > nb + usize::from(nf > 0) || i == 0 || j == 0 || i > j {
            return Err(format!("entry out of range: `{line}`"));
        }
        if blk <= nb {
            let n = psd_sizes[blk - 1] as usize;
            if j > n {
                return Err(format!("entry outside block: `{line}`"));
            }
            if matno == 0 {
                block_costs[blk - 1].push((i - 1, j - 1, -v));
            } else {
                equalities[matno - 1].block_entries.push((blk - 1, i - 1, j - 1, v));
            }
        } else {
            if i != j || j > 2 * nf {
                return Err(format!("free block entries must be diagonal: `{line}`"));
            }
            let (half, k) = if i <= nf { (0, i - 1) } else { (1, i - nf - 1) };
            let store = if half == 0 { &mut free_plus } else { &mut free_minus };
            *store[matno].entry(k).or_insert(0.0) += v;
        }
    }

    for matno in 0..=m {
        for (&k, &vp) in &free_plus[matno] {
            let vm = free_minus[matno].get(&k).copied().unwrap_or(0.0);
            if (vp + vm).abs() > 1e-12 * vp.abs().max(1.0) {
                return Err(format!(
                    "free block halves disagree for matrix {matno}, variable {k}"
                ));
            }
            if matno == 0 {
                objective_free[k] = -vp;
            } else {
                equalities[matno - 1].free_entries.push((k, vp));
            }
        }
        for &k in free_minus[matno].keys() {
            if !free_plus[matno].contains_key(&k) {
                return Err(format!("lone − half for matrix {matno}, variable {k}"));
            }
        }
    }

    Ok(SdpProblem {
        psd_blocks: (0..nb)
            .map(|k| (format!("block{}", k + 1), psd_sizes[k] as usize))
            .collect(),
        free_vars: nf,
        equalities,
        objective_free,
        block_costs,
    })
}
