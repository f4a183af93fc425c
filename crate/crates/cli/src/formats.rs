//! JSON and CSV encodings of solver outputs.
//!
//! Floats are written in shortest round-trip form, so every value is full
//! double precision and re-parses bit-identically. JSON complex numbers are
//! `[re, im]` pairs. Non-finite values become `null` in JSON and `NaN`/`inf`
//! in CSV.

use fockfield::coherent::FoliationReport;
use fockfield::fock::CommutatorDefect;
use fockfield::maxent::{MaxEntSolution, Validation};
use fockfield::nalgebra::DMatrix;
use fockfield::opstate::{ComparisonReport, CutoffComparison};
use fockfield::{Complex64, Error, ModeSpace, ProjectivePoint};
use serde::Serialize;
use serde_json::{json, Value};

pub type Pair = [f64; 2];

pub fn pair(z: Complex64) -> Pair {
    [z.re, z.im]
}

pub fn pairs(zs: &[Complex64]) -> Vec<Pair> {
    zs.iter().copied().map(pair).collect()
}

pub fn real_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("output values serialise");
    out.push(b'\n');
    out
}

/// Shortest round-trip form; exponent notation outside `1e-5..1e16`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Build a CSV document from a header and rows of already formatted cells.
pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn complex_headers(prefix: &str, n: usize) -> Vec<String> {
    (0..n).flat_map(|m| [format!("{prefix}re{m}"), format!("{prefix}im{m}")]).collect()
}

fn complex_cells(zs: &[Complex64]) -> Vec<String> {
    zs.iter().flat_map(|z| [fmt_f64(z.re), fmt_f64(z.im)]).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DefectSummary {
    /// Largest operator norm of `[A_m, C_m'] − δ I` over mode pairs, on the sub-cutoff block.
    pub restricted: f64,
    pub unrestricted: f64,
}

impl DefectSummary {
    pub fn worst(defects: impl IntoIterator<Item = CommutatorDefect>) -> Self {
        defects.into_iter().fold(Self { restricted: 0.0, unrestricted: 0.0 }, |acc, d| Self {
            restricted: acc.restricted.max(d.restricted),
            unrestricted: acc.unrestricted.max(d.unrestricted),
        })
    }
}

pub struct SolveContext<'a> {
    pub config_hash: &'a str,
    pub space: &'a ModeSpace,
    pub seed: u64,
    pub draws: usize,
    pub samples: usize,
    pub defect: DefectSummary,
}

pub fn solution_json(ctx: &SolveContext<'_>, sol: &MaxEntSolution, val: &Validation) -> Value {
    let d = &sol.diagnostics;
    json!({
        "config_hash": ctx.config_hash,
        "modes": ctx.space.num_modes(),
        "cutoff": ctx.space.cutoff(),
        "dim": ctx.space.dim(),
        "seed": ctx.seed,
        "draws": ctx.draws,
        "samples": ctx.samples,
        "target_field": pairs(&sol.target_field.0),
        "mu": pairs(&sol.mu.0),
        "achieved_field": pairs(&sol.achieved_field.0),
        "residual_norm": sol.residual_norm,
        "log_z": sol.log_z,
        "log_z_stderr": sol.log_z_stderr,
        "entropy": sol.entropy,
        "iterations": sol.iterations,
        "diagnostics": {
            "ess": d.ess,
            "field_stderr": pairs(&d.field_stderr),
            "covariance": real_rows(&d.covariance),
            "residual_history": d.residual_history,
            "gradient_fallback_steps": d.gradient_fallback_steps,
            "feasibility_bound": d.feasibility_bound,
        },
        "validation": {
            "field": pairs(&val.field.0),
            "field_stderr": pairs(&val.field_stderr),
            "residual": val.residual,
            "ess": val.ess,
        },
        "commutator_defect": ctx.defect,
    })
}

pub fn density_matrix_json(space: &ModeSpace, rho: &DMatrix<Complex64>, stderr: &DMatrix<Complex64>) -> Value {
    let part = |m: &DMatrix<Complex64>, f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
    };
    json!({
        "dim": space.dim(),
        "basis": space.basis(),
        "real": part(rho, |z| z.re),
        "imag": part(rho, |z| z.im),
        "stderr_real": part(stderr, |z| z.re),
        "stderr_imag": part(stderr, |z| z.im),
    })
}

pub fn density_matrix_csv(rho: &DMatrix<Complex64>, stderr: &DMatrix<Complex64>) -> Vec<u8> {
    let header: Vec<String> = ["row", "col", "re", "im", "stderr_re", "stderr_im"].map(String::from).to_vec();
    let mut rows = Vec::with_capacity(rho.len());
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            let (z, s) = (rho[(i, j)], stderr[(i, j)]);
            rows.push(vec![i.to_string(), j.to_string(), fmt_f64(z.re), fmt_f64(z.im), fmt_f64(s.re), fmt_f64(s.im)]);
        }
    }
    csv_bytes(&header, &rows)
}

fn comparison_row_json(target_index: usize, target: &[Complex64], r: &CutoffComparison) -> Value {
    json!({
        "target_index": target_index,
        "target": pairs(target),
        "cutoff": r.cutoff,
        "dim": r.dim,
        "ensemble_mu": pairs(&r.ensemble_mu.0),
        "operator_mu": pairs(&r.operator_mu.0),
        "ensemble_log_z": r.ensemble_log_z,
        "operator_log_q": r.operator_log_q,
        "differential_entropy": r.differential_entropy,
        "von_neumann_entropy": r.von_neumann_entropy,
        "trace_distance": r.trace_distance,
        "trace_distance_stderr": r.trace_distance_stderr,
        "fidelity": r.fidelity,
        "ensemble_residual": r.ensemble_residual,
        "operator_residual": r.operator_residual,
        "ess": r.ess,
        "commutator_defect": r.commutator_defect,
    })
}

pub fn comparison_json(config_hash: &str, reports: &[ComparisonReport]) -> Value {
    let rows: Vec<Value> = reports
        .iter()
        .enumerate()
        .flat_map(|(t, rep)| rep.rows.iter().map(move |r| comparison_row_json(t, &rep.target.0, r)))
        .collect();
    json!({ "config_hash": config_hash, "rows": rows })
}

/// One row per `(target, cutoff)`.
pub fn comparison_csv(modes: usize, reports: &[ComparisonReport]) -> Vec<u8> {
    let mut header = vec!["target_index".to_string()];
    header.extend(complex_headers("target_", modes));
    header.extend(["cutoff", "dim"].map(String::from));
    header.extend(complex_headers("ensemble_mu_", modes));
    header.extend(complex_headers("operator_mu_", modes));
    header.extend(
        [
            "ensemble_log_z",
            "operator_log_q",
            "differential_entropy",
            "von_neumann_entropy",
            "trace_distance",
            "trace_distance_stderr",
            "fidelity",
            "ensemble_residual",
            "operator_residual",
            "ess",
            "commutator_defect",
        ]
        .map(String::from),
    );
    let mut rows = Vec::new();
    for (t, rep) in reports.iter().enumerate() {
        for r in &rep.rows {
            let mut row = vec![t.to_string()];
            row.extend(complex_cells(&rep.target.0));
            row.extend([r.cutoff.to_string(), r.dim.to_string()]);
            row.extend(complex_cells(&r.ensemble_mu.0));
            row.extend(complex_cells(&r.operator_mu.0));
            row.extend(
                [
                    r.ensemble_log_z,
                    r.operator_log_q,
                    r.differential_entropy,
                    r.von_neumann_entropy,
                    r.trace_distance,
                    r.trace_distance_stderr,
                    r.fidelity,
                    r.ensemble_residual,
                    r.operator_residual,
                    r.ess,
                    r.commutator_defect,
                ]
                .map(fmt_f64),
            );
            rows.push(row);
        }
    }
    csv_bytes(&header, &rows)
}

pub fn foliation_json(config_hash: &str, rep: &FoliationReport) -> Value {
    let points: Vec<Value> = rep
        .points
        .iter()
        .map(|p| {
            json!({
                "start_index": p.start_index,
                "residual": p.residual,
                "photon_number": p.photon_number,
                "eigen_residual": p.eigen_residual,
                "distance_to_coherent": p.distance_to_coherent,
                "amplitudes": pairs(p.point.representative().as_slice()),
            })
        })
        .collect();
    let failures: Vec<Value> =
        rep.failures.iter().map(|f| json!({ "start_index": f.start_index, "residual": f.residual })).collect();
    let c = &rep.coherent;
    json!({
        "config_hash": config_hash,
        "field": pairs(&rep.field.0),
        "coherent": {
            "amplitudes": pairs(c.point.representative().as_slice()),
            "truncation_tail": c.truncation_tail,
            "surface_residual": c.surface_residual,
            "photon_number": c.photon_number,
            "eigen_residual": c.eigen_residual,
        },
        "test_mus": rep.test_mus.iter().map(|mu| pairs(&mu.0)).collect::<Vec<_>>(),
        "log_weight_spread": rep.log_weight_spread,
        "min_surface_photon_number": rep.min_surface_photon_number,
        "coherent_minimizes_photon_number": rep.coherent_minimizes_photon_number,
        "coherent_like_points": rep.coherent_like_points,
        "max_coherent_like_distance": rep.max_coherent_like_distance,
        "surface_points": points,
        "failures": failures,
    })
}

pub fn surface_points_csv(rep: &FoliationReport) -> Vec<u8> {
    let dim = rep.coherent.point.dim();
    let mut header: Vec<String> =
        ["start_index", "residual", "photon_number", "eigen_residual", "distance_to_coherent"].map(String::from).to_vec();
    header.extend(complex_headers("", dim));
    let rows: Vec<Vec<String>> = rep
        .points
        .iter()
        .map(|p| {
            let mut row = vec![p.start_index.to_string()];
            row.extend([p.residual, p.photon_number, p.eigen_residual, p.distance_to_coherent].map(fmt_f64));
            row.extend(complex_cells(p.point.representative().as_slice()));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// `index,re0,im0,…` with one row per point.
pub fn samples_csv(start: u64, points: &[ProjectivePoint]) -> Vec<u8> {
    let dim = points.first().map_or(0, ProjectivePoint::dim);
    let mut header = vec!["index".to_string()];
    header.extend(complex_headers("", dim));
    let rows: Vec<Vec<String>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut row = vec![(start + i as u64).to_string()];
            row.extend(complex_cells(p.representative().as_slice()));
            row
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Stable machine-readable tag for a core error.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Capacity { .. } => "capacity",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::DegenerateWeights { .. } => "degenerate_weights",
        Error::Infeasible { .. } => "infeasible",
        Error::EssCollapse { .. } => "ess_collapse",
        Error::NonConvergence { .. } => "non_convergence",
        Error::Rejected { .. } => "rejected",
        Error::Numerical(_) => "numerical",
    }
}

pub fn error_json(e: &Error, exit_code: i32) -> Value {
    let details = match e {
        Error::Capacity { modes, cutoff, dim, cap } => {
            json!({ "modes": modes, "cutoff": cutoff, "dim": dim.to_string(), "cap": cap })
        }
        Error::DimensionMismatch { expected, found } => json!({ "expected": expected, "found": found }),
        Error::DegenerateWeights { ess, threshold } => json!({ "ess": ess, "threshold": threshold }),
        Error::Infeasible { target_norm, bound, mu_norm } => {
            json!({ "target_norm": target_norm, "bound": bound, "mu_norm": mu_norm })
        }
        Error::EssCollapse { mu, ess, threshold } => json!({ "mu": pairs(mu), "ess": ess, "threshold": threshold }),
        Error::NonConvergence { iterations, residual_history } => {
            json!({ "iterations": iterations, "residual_history": residual_history })
        }
        Error::Rejected { reason, discrepancy } => json!({ "reason": reason, "discrepancy": discrepancy }),
        Error::InvalidArgument(_) | Error::Numerical(_) => json!({}),
    };
    json!({
        "error": error_kind(e),
        "exit_code": exit_code,
        "message": e.to_string(),
        "details": details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 1e-20] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
            assert!(!fmt_f64(v).contains(','));
        }
        assert_eq!(fmt_f64(6.4e-15), "6.4e-15");
        assert_eq!(fmt_f64(0.25), "0.25");
    }

    #[test]
    fn samples_csv_shape() {
        let pts: Vec<_> = (0..4).map(|i| fockfield::projective::sample_point(3, 1, i)).collect();
        let text = String::from_utf8(samples_csv(0, &pts)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,re0,im0,re1,im1,re2,im2");
        assert_eq!(lines.len(), 5);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 7));
    }
}
