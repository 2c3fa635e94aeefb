//! Eigenvalue-based small-signal verdict.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::equilibrium::{solve_equilibrium, Equilibrium};
use crate::error::{GridError, Result};
use crate::linearization::{analytic_jacobian_with, JacobianMatrix, JacobianStructure};
use crate::model::MicrogridParams;

/// |r_max| below this is flagged marginal. The verdict itself stays strict.
pub const MARGINAL_BAND: f64 = 1e-9;

const SCHUR_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Sorted by real part, then imaginary part, both descending.
    pub eigenvalues: Vec<Complex64>,
    /// Spectral abscissa, per second.
    pub r_max: f64,
    /// All eigenvalues strictly in the open left half-plane.
    pub ssasc: bool,
    /// `|r_max|` when stable, zero otherwise.
    pub margin: f64,
    pub marginal: bool,
}

impl StabilityReport {
    pub fn from_eigenvalues(eigenvalues: Vec<Complex64>) -> Self {
        let r_max = eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let ssasc = r_max < 0.0;
        Self {
            eigenvalues,
            r_max,
            ssasc,
            margin: if ssasc { -r_max } else { 0.0 },
            marginal: r_max.abs() < MARGINAL_BAND,
        }
    }

    /// `re,im` rows, then a `# r_max,...` summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im\n");
        for l in &self.eigenvalues {
            let _ = writeln!(out, "{:.17e},{:.17e}", l.re, l.im);
        }
        let _ = writeln!(
            out,
            "# r_max={:.17e},ssasc={},margin={:.17e},marginal={}",
            self.r_max, self.ssasc, self.margin, self.marginal
        );
        out
    }
}

fn spectrum_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

/// Full spectrum of a dense real matrix via the real Schur form.
pub fn eigenvalues_of(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let dim = m.nrows();
    if m.iter().any(|x| !x.is_finite()) {
        return Err(GridError::ConvergenceFailure { dim });
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(GridError::ConvergenceFailure { dim })?;
    let mut eigs: Vec<Complex64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect();
    if eigs.len() != dim {
        return Err(GridError::ConvergenceFailure { dim });
    }
    enforce_conjugate_pairs(&mut eigs);
    eigs.sort_by(spectrum_order);
    Ok(eigs)
}

pub fn eigenvalues(a: &JacobianMatrix) -> Result<Vec<Complex64>> {
    eigenvalues_of(&a.entries)
}

/// Pairs each upper-half-plane eigenvalue with its nearest lower-half
/// partner and makes the pair exactly conjugate.
fn enforce_conjugate_pairs(eigs: &mut [Complex64]) {
    let mut used = vec![false; eigs.len()];
    for k in 0..eigs.len() {
        if used[k] || eigs[k].im <= 0.0 {
            continue;
        }
        let target = eigs[k].conj();
        let partner = (0..eigs.len())
            .filter(|&m| m != k && !used[m] && eigs[m].im < 0.0)
            .min_by(|&a, &b| {
                (eigs[a] - target)
                    .norm()
                    .total_cmp(&(eigs[b] - target).norm())
            });
        if let Some(m) = partner {
            let re = 0.5 * (eigs[k].re + eigs[m].re);
            let im = 0.5 * (eigs[k].im - eigs[m].im);
            eigs[k] = Complex64::new(re, im);
            eigs[m] = Complex64::new(re, -im);
            used[k] = true;
            used[m] = true;
        }
    }
}

/// Equilibrium, exact Jacobian, spectrum.
pub fn assess(params: &MicrogridParams) -> Result<StabilityReport> {
    assess_with(params, JacobianStructure::Exact)
}

pub fn assess_with(
    params: &MicrogridParams,
    structure: JacobianStructure,
) -> Result<StabilityReport> {
    let eq = solve_equilibrium(params)?;
    assess_at(params, &eq, structure)
}

pub fn assess_at(
    params: &MicrogridParams,
    eq: &Equilibrium,
    structure: JacobianStructure,
) -> Result<StabilityReport> {
    let a = analytic_jacobian_with(params, eq, structure)?;
    Ok(StabilityReport::from_eigenvalues(eigenvalues(&a)?))
}
