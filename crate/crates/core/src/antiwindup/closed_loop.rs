//! Elimination of the algebraic loops around the saturation.

use super::{AntiWindupError, AntiWindupGain, ControllerModel, PlantModel};
use crate::linalg;
use crate::Mat;

/// Largest accepted condition number of `I - D_cy D_pyu`.
const WELL_POSED_CONDITION: f64 = 1e10;

/// Closed loop for one parameter sample, with `q = dz(u)` and `v = D_aw q`:
///
/// ```text
/// ẋ = A x + B_q q + B_v v + B_w w
/// z = C_z x + D_zq q + D_zv v + D_zw w
/// u = C_u x + D_uq q + D_uv v + D_uw w
/// ```
///
/// The state is `x = [xp; xc]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopModel {
    pub a: Mat,
    pub b_q: Mat,
    pub b_v: Mat,
    pub b_w: Mat,
    pub c_z: Mat,
    pub d_zq: Mat,
    pub d_zv: Mat,
    pub d_zw: Mat,
    pub c_u: Mat,
    pub d_uq: Mat,
    pub d_uv: Mat,
    pub d_uw: Mat,
    pub n_xp: usize,
    pub n_xc: usize,
}

impl ClosedLoopModel {
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b_q.ncols()
    }
    pub fn n_w(&self) -> usize {
        self.b_w.ncols()
    }
    pub fn n_z(&self) -> usize {
        self.c_z.nrows()
    }
    /// Rows of `D_aw`.
    pub fn n_aw(&self) -> usize {
        self.n_xc + self.n_u()
    }

    /// `(B_q + B_v D_aw, D_uq + D_uv D_aw, D_zq + D_zv D_aw)`.
    pub fn with_gain(&self, gain: &AntiWindupGain) -> (Mat, Mat, Mat) {
        let d = gain.matrix();
        (&self.b_q + &self.b_v * d, &self.d_uq + &self.d_uv * d, &self.d_zq + &self.d_zv * d)
    }
}

/// Eliminates `y` and `sat(u) = u - dz(u)` from the plant/controller
/// interconnection.
///
/// Solving `(I - D_cy D_pyu) u = D_cy C_py xp + C_c xc + (D_cy D_pyw + D_cw) w
/// - D_cy D_pyu q + v₂` for `u` and substituting gives every closed-loop
/// matrix; the `v` columns are kept separate so the model stays affine in
/// `D_aw`.
pub fn assemble_closed_loop(plant: &PlantModel, ctrl: &ControllerModel) -> Result<ClosedLoopModel, AntiWindupError> {
    plant.validate()?;
    ctrl.validate(plant.n_u(), plant.n_w(), plant.n_y())?;
    let (nxp, nxc, nu, nz) = (plant.n_xp(), ctrl.n_xc(), plant.n_u(), plant.n_z());
    let nx = nxp + nxc;

    let coupling = Mat::identity(nu, nu) - &ctrl.d_cy * &plant.d_pyu;
    let condition = linalg::condition_number(&coupling);
    if !(condition < WELL_POSED_CONDITION) {
        return Err(AntiWindupError::IllPosed { condition });
    }
    let delta = coupling.try_inverse().ok_or(AntiWindupError::IllPosed { condition: f64::INFINITY })?;

    let mut c_u = Mat::zeros(nu, nx);
    c_u.view_mut((0, 0), (nu, nxp)).copy_from(&(&delta * &ctrl.d_cy * &plant.c_py));
    c_u.view_mut((0, nxp), (nu, nxc)).copy_from(&(&delta * &ctrl.c_c));
    let d_uq = -(&delta * &ctrl.d_cy * &plant.d_pyu);
    let d_uw = &delta * (&ctrl.d_cy * &plant.d_pyw + &ctrl.d_cw);
    let mut d_uv = Mat::zeros(nu, nxc + nu);
    d_uv.view_mut((0, nxc), (nu, nu)).copy_from(&delta);

    // Open-loop state map and the column through which sat(u) enters.
    let mut a0 = Mat::zeros(nx, nx);
    a0.view_mut((0, 0), (nxp, nxp)).copy_from(&plant.a_p);
    a0.view_mut((nxp, 0), (nxc, nxp)).copy_from(&(&ctrl.b_cy * &plant.c_py));
    a0.view_mut((nxp, nxp), (nxc, nxc)).copy_from(&ctrl.a_c);
    let mut b_sat = Mat::zeros(nx, nu);
    b_sat.view_mut((0, 0), (nxp, nu)).copy_from(&plant.b_pu);
    b_sat.view_mut((nxp, 0), (nxc, nu)).copy_from(&(&ctrl.b_cy * &plant.d_pyu));
    let mut b_w0 = Mat::zeros(nx, plant.n_w());
    b_w0.view_mut((0, 0), (nxp, plant.n_w())).copy_from(&plant.b_pw);
    b_w0.view_mut((nxp, 0), (nxc, plant.n_w())).copy_from(&(&ctrl.b_cy * &plant.d_pyw + &ctrl.b_cw));
    let mut b_v1 = Mat::zeros(nx, nxc + nu);
    b_v1.view_mut((nxp, 0), (nxc, nxc)).fill_with_identity();

    let eye_u = Mat::identity(nu, nu);
    let a = &a0 + &b_sat * &c_u;
    let b_q = &b_sat * (&d_uq - &eye_u);
    let b_v = &b_sat * &d_uv + b_v1;
    let b_w = b_w0 + &b_sat * &d_uw;

    let mut c_z0 = Mat::zeros(nz, nx);
    c_z0.view_mut((0, 0), (nz, nxp)).copy_from(&plant.c_pz);
    let c_z = c_z0 + &plant.d_pzu * &c_u;
    let d_zq = &plant.d_pzu * (&d_uq - &eye_u);
    let d_zv = &plant.d_pzu * &d_uv;
    let d_zw = &plant.d_pzw + &plant.d_pzu * &d_uw;

    Ok(ClosedLoopModel { a, b_q, b_v, b_w, c_z, d_zq, d_zv, d_zw, c_u, d_uq, d_uv, d_uw, n_xp: nxp, n_xc: nxc })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, v)
    }

    /// First-order plant with a unit integral controller acting on w - y.
    fn first_order(a: f64, b: f64) -> (PlantModel, ControllerModel) {
        let plant = PlantModel {
            a_p: m(1, 1, &[a]),
            b_pu: m(1, 1, &[b]),
            b_pw: m(1, 1, &[0.0]),
            c_py: m(1, 1, &[1.0]),
            d_pyu: m(1, 1, &[0.0]),
            d_pyw: m(1, 1, &[0.0]),
            c_pz: m(1, 1, &[-1.0]),
            d_pzu: m(1, 1, &[0.0]),
            d_pzw: m(1, 1, &[1.0]),
        };
        let ctrl = ControllerModel {
            a_c: m(1, 1, &[0.0]),
            b_cy: m(1, 1, &[-1.0]),
            b_cw: m(1, 1, &[1.0]),
            c_c: m(1, 1, &[1.0]),
            d_cy: m(1, 1, &[-1.0]),
            d_cw: m(1, 1, &[1.0]),
        };
        (plant, ctrl)
    }

    #[test]
    fn first_order_mean_parameters() {
        let (p, c) = first_order(-1.0, 1.0);
        let cl = assemble_closed_loop(&p, &c).unwrap();
        assert_eq!(cl.a, m(2, 2, &[-2.0, 1.0, -1.0, 0.0]));
        assert_eq!(cl.b_w, m(2, 1, &[1.0, 1.0]));
        assert_eq!(cl.c_u, m(1, 2, &[-1.0, 1.0]));
        assert_eq!(cl.d_uq, m(1, 1, &[0.0]));
        assert_eq!(cl.d_uw, m(1, 1, &[1.0]));
        assert_eq!(cl.b_v, m(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(cl.b_q, m(2, 1, &[-1.0, 0.0]));
    }

    #[test]
    fn no_feedthrough_gives_block_state_matrix() {
        let (p, mut c) = first_order(-3.0, 2.0);
        c.d_cy = m(1, 1, &[0.0]);
        let cl = assemble_closed_loop(&p, &c).unwrap();
        // [[A_p, B_pu C_c], [B_cy C_py, A_c]]
        assert_eq!(cl.a, m(2, 2, &[-3.0, 2.0, -1.0, 0.0]));
        assert_eq!(cl.d_uq, m(1, 1, &[0.0]));
    }

    #[test]
    fn singular_coupling_is_rejected() {
        let (mut p, mut c) = first_order(-1.0, 1.0);
        p.d_pyu = m(1, 1, &[1.0]);
        c.d_cy = m(1, 1, &[1.0]);
        assert!(matches!(assemble_closed_loop(&p, &c), Err(AntiWindupError::IllPosed { .. })));
    }

    #[test]
    fn dimension_errors_name_the_matrix() {
        let (mut p, c) = first_order(-1.0, 1.0);
        p.c_pz = m(1, 2, &[1.0, 0.0]);
        match assemble_closed_loop(&p, &c) {
            Err(AntiWindupError::Dimension { matrix, .. }) => assert_eq!(matrix, "C_pz"),
            other => panic!("{other:?}"),
        }
    }
}
