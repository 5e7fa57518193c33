//! Regional sector-based LMIs for ℒ₂ gain, domain of attraction and
//! reachable-set estimation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{AntiWindupGain, ClosedLoopModel, SaturationLimits};
use crate::lmi::{LmiConstraint, LmiError, MatExpr, RectMatrixVar, SdpProblem, SymMatrixVar, SymStructure};
use crate::Mat;

/// Per-sample certificate: Lyapunov matrix `Q` (`n_x × n_x`) and sector
/// matrix `Y` (`n_u × n_x`).
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovCertificate {
    pub q: SymMatrixVar,
    pub y: RectMatrixVar,
}

impl LyapunovCertificate {
    pub fn declare(p: &mut SdpProblem, n_x: usize, n_u: usize) -> Result<Self, LmiError> {
        Ok(Self { q: p.sym_matrix("Q", n_x, SymStructure::Full)?, y: p.rect_matrix("Y", n_u, n_x)? })
    }
}

/// Where the anti-windup gain comes from: a free synthesis variable `X`
/// (standing for `D_aw U`) or a fixed gain.
#[derive(Clone, Copy, Debug)]
pub enum GainSource<'a> {
    Free(&'a RectMatrixVar),
    Fixed(&'a AntiWindupGain),
}

/// The `dz`-columns of the LMIs: `B_q U + B_v X`, `D_uq U + D_uv X - U` and
/// `D_zq U + D_zv X`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopColumns {
    pub b: MatExpr,
    pub du: MatExpr,
    pub dz: MatExpr,
}

fn shape_err(context: &'static str, expected: (usize, usize), found: (usize, usize)) -> LmiError {
    LmiError::Shape { context, expected, found }
}

pub fn loop_columns(cl: &ClosedLoopModel, u: &SymMatrixVar, gain: GainSource<'_>) -> Result<LoopColumns, LmiError> {
    let (nu, naw) = (cl.n_u(), cl.n_aw());
    if u.dim() != nu {
        return Err(shape_err("multiplier U", (nu, nu), (u.dim(), u.dim())));
    }
    let u_expr = u.expr();
    let x_expr = match gain {
        GainSource::Free(x) => {
            if (x.rows(), x.cols()) != (naw, nu) {
                return Err(shape_err("synthesis variable X", (naw, nu), (x.rows(), x.cols())));
            }
            x.expr()
        }
        GainSource::Fixed(g) => {
            if g.matrix().shape() != (naw, nu) {
                return Err(shape_err("anti-windup gain", (naw, nu), g.matrix().shape()));
            }
            g.matrix() * &u_expr
        }
    };
    Ok(LoopColumns {
        b: &(&cl.b_q * &u_expr) + &(&cl.b_v * &x_expr),
        du: &(&(&cl.d_uq * &u_expr) + &(&cl.d_uv * &x_expr)) - &u_expr,
        dz: &(&cl.d_zq * &u_expr) + &(&cl.d_zv * &x_expr),
    })
}

/// `U ≻ 0`.
pub fn multiplier_positive(u: &SymMatrixVar) -> LmiConstraint {
    LmiConstraint::pos_def(u.expr(), "U > 0")
}

fn check_certificate(
    cl: &ClosedLoopModel,
    cert: &LyapunovCertificate,
    limits: &SaturationLimits,
) -> Result<(), LmiError> {
    let (nx, nu) = (cl.n_x(), cl.n_u());
    if cert.q.dim() != nx {
        return Err(shape_err("certificate Q", (nx, nx), (cert.q.dim(), cert.q.dim())));
    }
    if (cert.y.rows(), cert.y.cols()) != (nu, nx) {
        return Err(shape_err("certificate Y", (nu, nx), (cert.y.rows(), cert.y.cols())));
    }
    if limits.len() != nu {
        return Err(shape_err("saturation limits", (nu, 1), (limits.len(), 1)));
    }
    Ok(())
}

fn c(m: &Mat) -> MatExpr {
    MatExpr::constant(m.clone())
}

fn z(r: usize, cols: usize) -> MatExpr {
    MatExpr::zeros(r, cols)
}

/// `[[Q, Y_kᵀ], [Y_k, level]] ⪰ 0` for every input channel `k`.
fn sector_q_first(q: &MatExpr, y: &MatExpr, levels: impl Iterator<Item = f64>) -> Result<Vec<LmiConstraint>, LmiError> {
    levels
        .enumerate()
        .map(|(k, level)| {
            let yk = y.row(k);
            let e = MatExpr::block(&[vec![q.clone(), yk.transpose()], vec![yk, MatExpr::scalar_const(level)]])?;
            Ok(LmiConstraint::psd(e, format!("sector k={k}")))
        })
        .collect()
}

/// `[[level, Y_k], [Y_kᵀ, Q]] ⪰ 0` for every input channel `k`.
fn sector_level_first(
    q: &MatExpr,
    y: &MatExpr,
    levels: impl Iterator<Item = f64>,
) -> Result<Vec<LmiConstraint>, LmiError> {
    levels
        .enumerate()
        .map(|(k, level)| {
            let yk = y.row(k);
            let e = MatExpr::block(&[vec![MatExpr::scalar_const(level), yk.clone()], vec![yk.transpose(), q.clone()]])?;
            Ok(LmiConstraint::psd(e, format!("sector k={k}")))
        })
        .collect()
}

/// Regional ℒ₂ gain conditions for disturbances with `‖w‖₂ ≤ s`: `Q ≻ 0`,
/// the dissipation inequality `He[…] ≺ 0` with `γ²` given as a 1×1
/// expression, and the sector-coverage LMIs with entry `ū_k²/s²`.
pub fn l2_constraints(
    cl: &ClosedLoopModel,
    cert: &LyapunovCertificate,
    cols: &LoopColumns,
    gamma2: &MatExpr,
    s: f64,
    limits: &SaturationLimits,
) -> Result<Vec<LmiConstraint>, LmiError> {
    check_certificate(cl, cert, limits)?;
    if gamma2.shape() != (1, 1) {
        return Err(shape_err("gamma^2", (1, 1), gamma2.shape()));
    }
    let (nx, nu, nw, nz) = (cl.n_x(), cl.n_u(), cl.n_w(), cl.n_z());
    let q = cert.q.expr();
    let y = cert.y.expr();
    let grid = [
        vec![&cl.a * &q, &cols.b + &y.transpose(), c(&cl.b_w), z(nx, nz)],
        vec![&cl.c_u * &q, cols.du.clone(), c(&cl.d_uw), z(nu, nz)],
        vec![z(nw, nx), z(nw, nu), c(&(Mat::identity(nw, nw) * -0.5)), z(nw, nz)],
        vec![&cl.c_z * &q, cols.dz.clone(), c(&cl.d_zw), gamma2.times_matrix(&(Mat::identity(nz, nz) * -0.5))?],
    ];
    let mut out = vec![
        LmiConstraint::pos_def(q.clone(), "Q > 0"),
        LmiConstraint::neg_def(MatExpr::block(&grid)?.he()?, "L2 dissipation"),
    ];
    out.extend(sector_q_first(&q, &y, limits.values().iter().map(|ub| ub * ub / (s * s)))?);
    Ok(out)
}

/// Domain-of-attraction conditions with `w = 0`: `Q ≻ 0`, `Q̄ ⪯ Q`, the
/// Lyapunov decrease `He[…] ≺ 0` and the sector LMIs with entry `ū_k²`.
pub fn doa_constraints(
    cl: &ClosedLoopModel,
    cert: &LyapunovCertificate,
    cols: &LoopColumns,
    qbar: &MatExpr,
    limits: &SaturationLimits,
) -> Result<Vec<LmiConstraint>, LmiError> {
    check_certificate(cl, cert, limits)?;
    let q = cert.q.expr();
    let y = cert.y.expr();
    let grid = [vec![&cl.a * &q, cols.b.clone()], vec![&(&cl.c_u * &q) - &y, cols.du.clone()]];
    let mut out = vec![
        LmiConstraint::pos_def(q.clone(), "Q > 0"),
        LmiConstraint::psd(&q - qbar, "Qbar <= Q"),
        LmiConstraint::neg_def(MatExpr::block(&grid)?.he()?, "Lyapunov decrease"),
    ];
    out.extend(sector_level_first(&q, &y, limits.values().iter().map(|ub| ub * ub))?);
    Ok(out)
}

/// Reachable-set conditions for `‖w‖₂ ≤ s` from the origin: `Q ≻ 0`,
/// `s²Q ⪯ Q̄` (the reachable set `{xᵀQ⁻¹x ≤ s²}` lies inside `{xᵀQ̄⁻¹x ≤ 1}`),
/// the dissipation inequality with the `w` row, and the sector LMIs with
/// entry `ū_k²/s²`.
pub fn reach_constraints(
    cl: &ClosedLoopModel,
    cert: &LyapunovCertificate,
    cols: &LoopColumns,
    qbar: &MatExpr,
    s: f64,
    limits: &SaturationLimits,
) -> Result<Vec<LmiConstraint>, LmiError> {
    check_certificate(cl, cert, limits)?;
    let (nx, nu, nw) = (cl.n_x(), cl.n_u(), cl.n_w());
    let q = cert.q.expr();
    let y = cert.y.expr();
    let grid = [
        vec![&cl.a * &q, cols.b.clone(), c(&cl.b_w)],
        vec![&(&cl.c_u * &q) - &y, cols.du.clone(), c(&cl.d_uw)],
        vec![z(nw, nx), z(nw, nu), c(&(Mat::identity(nw, nw) * -0.5))],
    ];
    let mut out = vec![
        LmiConstraint::pos_def(q.clone(), "Q > 0"),
        LmiConstraint::psd(qbar - &q.scale(s * s), "s^2 Q <= Qbar"),
        LmiConstraint::neg_def(MatExpr::block(&grid)?.he()?, "reachability dissipation"),
    ];
    out.extend(sector_level_first(&q, &y, limits.values().iter().map(|ub| ub * ub / (s * s)))?);
    Ok(out)
}
