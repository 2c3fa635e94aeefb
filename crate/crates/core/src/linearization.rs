//! Jacobian of the grid dynamics at an operating point.
//!
//! The analytic form differentiates every term of `f`, including the
//! `-k_P dv/dt` feedback inside the `alpha_ref` equation. That term couples
//! each `alpha_ref` row to every branch current and modulation index, so the
//! `(alpha_ref, i_B)` and `(alpha_ref, alpha)` blocks are dense in general.
//! [`JacobianStructure::BlockDiagonal`] drops those couplings and the `(alpha_ref,
//! alpha_ref)` block to reproduce the block pattern usually quoted for this
//! model; it is not the derivative of `f`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::equilibrium::{Equilibrium, EQUILIBRIUM_TOL};
use crate::error::{GridError, Result};
use crate::model::{
    check_state, to_per_unit, MicrogridParams, PerUnitModel, StateLayout, StateVector,
};

/// Default relative step of the central-difference Jacobian.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianStructure {
    /// Full chain rule; the true derivative of the dynamics.
    #[default]
    Exact,
    /// Blocks (3,1) and (3,2) reduced to their diagonals, block (3,3) zeroed.
    BlockDiagonal,
}

/// Dense `(3n+1) x (3n+1)` system matrix in state-layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    pub entries: DMatrix<f64>,
    pub layout: StateLayout,
}

impl JacobianMatrix {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// View of block `(r, c)` using 0-based block indices.
    pub fn block(&self, r: usize, c: usize) -> DMatrix<f64> {
        let rows = self.layout.block(r);
        let cols = self.layout.block(c);
        self.entries
            .view((rows.start, cols.start), (rows.len(), cols.len()))
            .into_owned()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Row-major CSV, one matrix row per line, `%.17e` formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.entries.nrows() {
            let row: Vec<String> = (0..self.entries.ncols())
                .map(|c| format!("{:.17e}", self.entries[(r, c)]))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Max over entries of `|a - b| / max(1, |a|)`, with `self` as `a`.
    pub fn max_relative_error(&self, other: &JacobianMatrix) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

impl From<JacobianMatrix> for DMatrix<f64> {
    fn from(j: JacobianMatrix) -> Self {
        j.entries
    }
}

/// Exact partial derivatives of `f` at an arbitrary admissible state.
pub(crate) fn jacobian_at(model: &PerUnitModel, x: &[f64]) -> Result<JacobianMatrix> {
    let n = model.n();
    let layout = model.layout();
    let dim = layout.dim();
    if x.len() != dim {
        return Err(GridError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    check_state(n, x)?;

    let c = model.control;
    let (k_p, k_i, droop, tau) = (c.k_p, c.k_i, c.droop, c.tau);
    let c_pu = model.c_pu;
    let v = x[3 * n];
    let iv = 3 * n;

    // Row of f_v: the bus KCL.
    let mut fv_i = vec![0.0; n];
    let mut fv_a = vec![0.0; n];
    for j in 0..n {
        let (i, a) = (x[j], x[n + j]);
        fv_i[j] = 1.0 / (c_pu * a);
        fv_a[j] = -i / (c_pu * a * a);
    }
    let fv_v = (model.p_load - model.p_fc_total) / (c_pu * v * v);

    let mut m = DMatrix::zeros(dim, dim);
    for (j, br) in model.branches.iter().enumerate() {
        let (i, a, r) = (x[j], x[n + j], x[2 * n + j]);
        let l = br.l_pu;

        m[(j, j)] = -br.r_b / l;
        m[(j, n + j)] = v / (l * a * a);
        m[(j, iv)] = -1.0 / (l * a);

        m[(n + j, n + j)] = -1.0 / tau;
        m[(n + j, 2 * n + j)] = 1.0 / tau;

        // g = d/dt (i / a) and its own-branch partials.
        let dg_di = -br.r_b / (a * l) + 1.0 / (tau * a) - r / (tau * a * a);
        let dg_da = -(br.e_b - br.r_b * i) / (a * a * l) + 2.0 * v / (a * a * a * l)
            - i / (tau * a * a)
            + 2.0 * i * r / (tau * a * a * a);
        let dg_dr = -i / (tau * a * a);
        let dg_dv = -1.0 / (a * a * l);

        let row = 2 * n + j;
        for k in 0..n {
            m[(row, k)] = -k_p * fv_i[k];
            m[(row, n + k)] = -k_p * fv_a[k];
        }
        m[(row, j)] += -k_p * droop * dg_di - k_i * droop / a;
        m[(row, n + j)] += -k_p * droop * dg_da + k_i * droop * i / (a * a);
        m[(row, 2 * n + j)] = -k_p * droop * dg_dr;
        m[(row, iv)] = -k_p * fv_v - k_p * droop * dg_dv - k_i;
    }
    for k in 0..n {
        m[(iv, k)] = fv_i[k];
        m[(iv, n + k)] = fv_a[k];
    }
    m[(iv, iv)] = fv_v;

    Ok(JacobianMatrix { entries: m, layout })
}

/// Closed-form Jacobian at a solved equilibrium.
pub fn analytic_jacobian(params: &MicrogridParams, eq: &Equilibrium) -> Result<JacobianMatrix> {
    analytic_jacobian_with(params, eq, JacobianStructure::Exact)
}

pub fn analytic_jacobian_with(
    params: &MicrogridParams,
    eq: &Equilibrium,
    structure: JacobianStructure,
) -> Result<JacobianMatrix> {
    if !(eq.residual_norm < EQUILIBRIUM_TOL) {
        return Err(GridError::NotAtEquilibrium {
            residual: eq.residual_norm,
        });
    }
    let mut jac = jacobian_at(&to_per_unit(params), eq.state.as_slice())?;
    if structure == JacobianStructure::BlockDiagonal {
        let n = jac.layout.n;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    jac.entries[(2 * n + j, k)] = 0.0;
                    jac.entries[(2 * n + j, n + k)] = 0.0;
                }
                jac.entries[(2 * n + j, 2 * n + k)] = 0.0;
            }
        }
    }
    Ok(jac)
}

/// Central differences, column by column, step `h * max(|x_k|, 1)`.
pub fn numeric_jacobian(
    params: &MicrogridParams,
    x: &StateVector,
    h: f64,
) -> Result<JacobianMatrix> {
    let model = to_per_unit(params);
    let dim = model.layout().dim();
    if x.as_slice().len() != dim {
        return Err(GridError::DimensionMismatch {
            expected: dim,
            got: x.as_slice().len(),
        });
    }
    let mut m = DMatrix::zeros(dim, dim);
    let mut xp = x.as_slice().to_vec();
    let mut xm = xp.clone();
    let mut fp = vec![0.0; dim];
    let mut fm = vec![0.0; dim];
    for k in 0..dim {
        let step = h * x.as_slice()[k].abs().max(1.0);
        xp[k] += step;
        xm[k] -= step;
        model.rhs_into(&xp, &mut fp)?;
        model.rhs_into(&xm, &mut fm)?;
        // Use the realized step to cancel representation error in x +- step.
        let width = xp[k] - xm[k];
        for r in 0..dim {
            m[(r, k)] = (fp[r] - fm[r]) / width;
        }
        xp[k] = x.as_slice()[k];
        xm[k] = x.as_slice()[k];
    }
    Ok(JacobianMatrix {
        entries: m,
        layout: model.layout(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_equilibrium;
    use crate::model::presets::operating_point_1;

    fn op1_jac() -> (MicrogridParams, Equilibrium, JacobianMatrix) {
        let p = operating_point_1(2e-3, 0.5e-3, 0.5);
        let eq = solve_equilibrium(&p).unwrap();
        let a = analytic_jacobian(&p, &eq).unwrap();
        (p, eq, a)
    }

    fn is_diagonal(m: &DMatrix<f64>) -> bool {
        (0..m.nrows()).all(|r| (0..m.ncols()).all(|c| r == c || m[(r, c)] == 0.0))
    }

    #[test]
    fn swapping_branches_permutes_the_matrix() {
        let mut p = operating_point_1(5e-3, 0.5e-3, 0.5);
        p.ess[1] = crate::model::EssParams::new(0.93, 0.02, 1e-3).unwrap();
        let mut q = p.clone();
        q.ess.swap(0, 1);
        let a = analytic_jacobian(&p, &solve_equilibrium(&p).unwrap()).unwrap();
        let b = analytic_jacobian(&q, &solve_equilibrium(&q).unwrap()).unwrap();
        // branch j lives at j, n + j, 2n + j
        let perm = |k: usize| if k == 6 { 6 } else { k ^ 1 };
        for r in 0..7 {
            for c in 0..7 {
                let (x, y) = (a.entries[(r, c)], b.entries[(perm(r), perm(c))]);
                assert!(
                    (x - y).abs() <= 1e-9 * x.abs().max(1.0),
                    "({r},{c}): {x} vs {y}"
                );
            }
        }
        let ea = crate::stability::eigenvalues(&a).unwrap();
        let eb = crate::stability::eigenvalues(&b).unwrap();
        for (x, y) in ea.iter().zip(&eb) {
            assert!((x - y).norm() <= 1e-8 * x.norm().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn branch_damping_entry() {
        // L_B = 0.5 mH -> L_pu = 0.5e-3 / 0.5625 = 8.889e-4 s.
        let (_, _, a) = op1_jac();
        let expected = -0.0177 / (0.5e-3 / 0.5625);
        assert!((a.entries[(0, 0)] - expected).abs() < 1e-12);
        assert!((a.entries[(0, 0)] + 19.9125).abs() < 1e-3);
    }

    #[test]
    fn delay_blocks_are_scaled_identities() {
        let (p, _, a) = op1_jac();
        let tau = p.control.tau;
        let b22 = a.block(1, 1);
        let b23 = a.block(1, 2);
        for r in 0..2 {
            for c in 0..2 {
                let d = if r == c { 1.0 } else { 0.0 };
                assert_eq!(b22[(r, c)], -d / tau);
                assert_eq!(b23[(r, c)], d / tau);
            }
        }
    }

    #[test]
    fn structural_zeros_and_diagonal_blocks() {
        let (p, eq, a) = op1_jac();
        assert!(a.block(1, 0).iter().all(|&z| z == 0.0));
        assert!(a.block(1, 3).iter().all(|&z| z == 0.0));
        assert!(a.block(3, 2).iter().all(|&z| z == 0.0));
        for (r, c) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
            assert!(is_diagonal(&a.block(r, c)), "block ({r},{c})");
        }
        // The delay feeds alpha_ref back into d/dt(i/alpha): block (3,3) is
        // k_P D i / (tau alpha^2) on the diagonal, not zero.
        let c = p.control;
        let (i, al) = (eq.state.i_b()[0], eq.state.alpha()[0]);
        let b33 = a.block(2, 2);
        assert!((b33[(0, 0)] - c.k_p * c.droop * i / (c.tau * al * al)).abs() < 1e-9);
        // Chain rule through dv/dt makes (3,1) and (3,2) dense.
        assert!(a.block(2, 0)[(0, 1)] != 0.0);
        assert!(a.block(2, 1)[(0, 1)] != 0.0);
    }

    #[test]
    fn block_diagonal_structure_drops_coupling() {
        let (p, eq, exact) = op1_jac();
        let blocky = analytic_jacobian_with(&p, &eq, JacobianStructure::BlockDiagonal).unwrap();
        assert!(is_diagonal(&blocky.block(2, 0)));
        assert!(is_diagonal(&blocky.block(2, 1)));
        assert!(blocky.block(2, 2).iter().all(|&z| z == 0.0));
        assert_eq!(blocky.block(2, 0)[(0, 0)], exact.block(2, 0)[(0, 0)]);
        assert_eq!(blocky.block(3, 3), exact.block(3, 3));
    }

    #[test]
    fn matches_central_differences() {
        let (p, eq, a) = op1_jac();
        let num = numeric_jacobian(&p, &eq.state, DEFAULT_FD_STEP).unwrap();
        let err = a.max_relative_error(&num);
        assert!(err < 1e-5, "max relative error {err:e}");
    }

    #[test]
    fn linear_columns_are_exact() {
        let (p, eq, a) = op1_jac();
        let num = numeric_jacobian(&p, &eq.state, DEFAULT_FD_STEP).unwrap();
        let tau = p.control.tau;
        for j in 0..2 {
            let col = 4 + j;
            assert!((num.entries[(2 + j, col)] - 1.0 / tau).abs() < 1e-6 / tau);
            assert_eq!(a.entries[(2 + j, col)], 1.0 / tau);
        }
    }

    #[test]
    fn second_order_convergence() {
        let (p, eq, a) = op1_jac();
        // Nonlinear entry d f_i / d alpha.
        let e1 = (numeric_jacobian(&p, &eq.state, 1e-3).unwrap().entries[(0, 2)]
            - a.entries[(0, 2)])
            .abs();
        let e2 = (numeric_jacobian(&p, &eq.state, 5e-4).unwrap().entries[(0, 2)]
            - a.entries[(0, 2)])
            .abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_non_equilibrium() {
        let (p, mut eq, _) = op1_jac();
        eq.residual_norm = 1e-3;
        assert!(matches!(
            analytic_jacobian(&p, &eq),
            Err(GridError::NotAtEquilibrium { .. })
        ));
    }

    #[test]
    fn numeric_propagates_singular_state() {
        let p = operating_point_1(2e-3, 0.5e-3, 0.5);
        let x = StateVector::from_parts(&[0.5; 2], &[1e-9; 2], &[1.0; 2], 1.0).unwrap();
        assert!(matches!(
            numeric_jacobian(&p, &x, DEFAULT_FD_STEP),
            Err(GridError::SingularState { .. })
        ));
    }

    #[test]
    fn csv_dump_shape() {
        let (_, _, a) = op1_jac();
        let csv = a.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().all(|l| l.split(',').count() == 7));
        let parsed: f64 = csv
            .lines()
            .next()
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(parsed, a.entries[(0, 0)]);
    }
}
