//! Agent dynamics `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)`, the full- and
//! reduced-order observers, and the neighbor-difference controller.

use crate::error::{Error, Result};
use crate::matops::{self, Matrix, Vector};

const CANONICAL_TOL: f64 = 1e-10;

/// Identical LTI dynamics shared by every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl LtiPlant {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim("A must be square", format!("{0}x{0}", a.nrows()), format!("{}x{}", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        if n == 0 {
            return Err(Error::invalid("state dimension must be positive"));
        }
        if b.nrows() != n {
            return Err(Error::dim("rows of B vs state dimension n", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(Error::dim("columns of C vs state dimension n", n, c.ncols()));
        }
        if c.nrows() > n || c.nrows() == 0 {
            return Err(Error::invalid(format!("output dimension q = {} must satisfy 1 <= q <= n = {n}", c.nrows())));
        }
        Ok(LtiPlant { a, b, c })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn r(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension.
    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }

    pub fn output(&self, x: &Vector) -> Vector {
        &self.c * x
    }

    /// Checks that `L` is `n x q`.
    pub fn check_observer_gain(&self, l: &Matrix) -> Result<()> {
        if l.shape() != (self.n(), self.q()) {
            return Err(Error::dim(
                "observer gain L",
                format!("{}x{}", self.n(), self.q()),
                format!("{}x{}", l.nrows(), l.ncols()),
            ));
        }
        Ok(())
    }

    /// Checks that `K` is `r x n`.
    pub fn check_feedback_gain(&self, k: &Matrix) -> Result<()> {
        if k.shape() != (self.r(), self.n()) {
            return Err(Error::dim(
                "feedback gain K",
                format!("{}x{}", self.r(), self.n()),
                format!("{}x{}", k.nrows(), k.ncols()),
            ));
        }
        Ok(())
    }
}

/// Plant in output-canonical coordinates `x̄ = P x`, where `C P⁻¹ = [0 I_q]`,
/// together with the reduced observer gain `L̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedForm {
    pub p: Matrix,
    pub p_inv: Matrix,
    pub a11: Matrix,
    pub a12: Matrix,
    pub a21: Matrix,
    pub a22: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    /// `(n-q) x q`; zero until set with [`ReducedForm::with_gain`].
    pub lbar: Matrix,
}

impl ReducedForm {
    /// Number of unmeasured canonical coordinates, `n - q`.
    pub fn unmeasured(&self) -> usize {
        self.a11.nrows()
    }

    pub fn q(&self) -> usize {
        self.a22.nrows()
    }

    pub fn n(&self) -> usize {
        self.unmeasured() + self.q()
    }

    pub fn with_gain(mut self, lbar: Matrix) -> Result<Self> {
        let want = (self.unmeasured(), self.q());
        if lbar.shape() != want {
            return Err(Error::dim(
                "reduced observer gain Lbar",
                format!("{}x{}", want.0, want.1),
                format!("{}x{}", lbar.nrows(), lbar.ncols()),
            ));
        }
        self.lbar = lbar;
        Ok(self)
    }

    /// `Ā = [[Ā11, Ā12], [Ā21, Ā22]]`.
    pub fn a_bar(&self) -> Matrix {
        let (m, q) = (self.unmeasured(), self.q());
        let mut out = Matrix::zeros(m + q, m + q);
        out.view_mut((0, 0), (m, m)).copy_from(&self.a11);
        out.view_mut((0, m), (m, q)).copy_from(&self.a12);
        out.view_mut((m, 0), (q, m)).copy_from(&self.a21);
        out.view_mut((m, m), (q, q)).copy_from(&self.a22);
        out
    }

    /// `B̄ = [B̄1; B̄2]`.
    pub fn b_bar(&self) -> Matrix {
        let (m, q, r) = (self.unmeasured(), self.q(), self.b1.ncols());
        let mut out = Matrix::zeros(m + q, r);
        out.view_mut((0, 0), (m, r)).copy_from(&self.b1);
        out.view_mut((m, 0), (q, r)).copy_from(&self.b2);
        out
    }

    /// Reduced error dynamics `Ā11 - L̄ Ā21`.
    pub fn error_matrix(&self) -> Matrix {
        &self.a11 - &self.lbar * &self.a21
    }

    /// Canonical coordinates of a physical state.
    pub fn to_canonical(&self, x: &Vector) -> Vector {
        &self.p * x
    }

    /// Unmeasured part `x̄₁` of a physical state.
    pub fn unmeasured_part(&self, x: &Vector) -> Vector {
        let xb = self.to_canonical(x);
        xb.rows(0, self.unmeasured()).into_owned()
    }
}

/// Column indices of `C` chosen as pivots by complete-pivoting elimination.
fn pivot_columns(c: &Matrix) -> Vec<usize> {
    let mut m = c.clone();
    let (q, n) = m.shape();
    let mut rows: Vec<usize> = (0..q).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut pivots = Vec::with_capacity(q);
    for step in 0..q {
        let mut best = (step, step, -1.0);
        for (ri, &r) in rows.iter().enumerate().skip(step) {
            for (ci, &cc) in cols.iter().enumerate().skip(step) {
                let v = m[(r, cc)].abs();
                if v > best.2 {
                    best = (ri, ci, v);
                }
            }
        }
        rows.swap(step, best.0);
        cols.swap(step, best.1);
        let (pr, pc) = (rows[step], cols[step]);
        pivots.push(pc);
        let pv = m[(pr, pc)];
        for &r in &rows[step + 1..] {
            let f = m[(r, pc)] / pv;
            if f != 0.0 {
                for j in 0..n {
                    let sub = f * m[(pr, j)];
                    m[(r, j)] -= sub;
                }
            }
        }
    }
    pivots
}

/// Transforms the plant into output-canonical coordinates.
///
/// Without an override, `P` stacks the standard basis rows of the non-pivot
/// columns of `C` above `C` itself. A supplied `P` must be invertible and
/// satisfy `C P⁻¹ = [0 I_q]`.
pub fn canonicalize_output(plant: &LtiPlant, p_override: Option<&Matrix>) -> Result<ReducedForm> {
    let (n, q) = (plant.n(), plant.q());
    let rank = matops::rank(&plant.c);
    if rank < q {
        return Err(Error::invalid(format!(
            "output matrix C is rank deficient: rank {rank} < q = {q}"
        )));
    }
    let p = match p_override {
        Some(p) => {
            if p.shape() != (n, n) {
                return Err(Error::dim("similarity transform P", format!("{n}x{n}"), format!("{}x{}", p.nrows(), p.ncols())));
            }
            p.clone()
        }
        None => {
            let piv = pivot_columns(&plant.c);
            let mut p = Matrix::zeros(n, n);
            for (row, j) in (0..n).filter(|j| !piv.contains(j)).enumerate() {
                p[(row, j)] = 1.0;
            }
            p.view_mut((n - q, 0), (q, n)).copy_from(&plant.c);
            p
        }
    };
    let p_inv = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("similarity transform P is singular"))?;
    let mut target = Matrix::zeros(q, n);
    target.view_mut((0, n - q), (q, q)).fill_with_identity();
    let resid = (&plant.c * &p_inv - &target).abs().max();
    if resid > CANONICAL_TOL {
        return Err(Error::invalid(format!(
            "C P^-1 deviates from [0 I_q] by {resid:e}"
        )));
    }
    let a_bar = &p * &plant.a * &p_inv;
    let b_bar = &p * &plant.b;
    let m = n - q;
    let r = plant.r();
    Ok(ReducedForm {
        a11: a_bar.view((0, 0), (m, m)).into_owned(),
        a12: a_bar.view((0, m), (m, q)).into_owned(),
        a21: a_bar.view((m, 0), (q, m)).into_owned(),
        a22: a_bar.view((m, m), (q, q)).into_owned(),
        b1: b_bar.view((0, 0), (m, r)).into_owned(),
        b2: b_bar.view((m, 0), (q, r)).into_owned(),
        lbar: Matrix::zeros(m, q),
        p,
        p_inv,
    })
}

/// Feedback gain `K` (`r x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k: Matrix,
}

impl GainSet {
    pub fn new(k: Matrix) -> Self {
        GainSet { k }
    }

    /// `K = [K1 K2]` with `K1` spanning the first `n - q` columns.
    pub fn split(&self, unmeasured: usize) -> Result<(Matrix, Matrix)> {
        if unmeasured > self.k.ncols() {
            return Err(Error::dim("partition width n - q", format!("<= {}", self.k.ncols()), unmeasured));
        }
        let r = self.k.nrows();
        let q = self.k.ncols() - unmeasured;
        Ok((
            self.k.view((0, 0), (r, unmeasured)).into_owned(),
            self.k.view((0, unmeasured), (r, q)).into_owned(),
        ))
    }
}

/// Observer attached to every agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Observer {
    /// Full-order Luenberger observer with gain `L` (`n x q`).
    Full { l: Matrix },
    /// Reduced-order observer in output-canonical coordinates.
    Reduced(ReducedForm),
}

impl Observer {
    pub fn is_reduced(&self) -> bool {
        matches!(self, Observer::Reduced(_))
    }
}

/// `x̂⁺ = A x̂ + B u + L (y - C x̂)`.
pub fn full_observer_step(plant: &LtiPlant, l: &Matrix, xhat: &Vector, u: &Vector, y: &Vector) -> Vector {
    &plant.a * xhat + &plant.b * u + l * (y - &plant.c * xhat)
}

/// One reduced-observer update. `y_k` and `y_next` are outputs at `k` and
/// `k + 1`, `u` the input applied at `k`.
pub fn reduced_observer_step(rf: &ReducedForm, xbar1_hat: &Vector, u: &Vector, y_k: &Vector, y_next: &Vector) -> Vector {
    let ybar = y_next - &rf.a22 * y_k - &rf.b2 * u;
    let ubar = &rf.a12 * y_k + &rf.b1 * u;
    &rf.a11 * xbar1_hat + ubar + &rf.lbar * (ybar - &rf.a21 * xbar1_hat)
}

/// `u = K Σ_j (θ_j - own)`; zero when there are no neighbors.
pub fn controller<'a>(k: &Matrix, received: impl IntoIterator<Item = &'a Vector>, own: &Vector) -> Vector {
    let mut acc = Vector::zeros(own.len());
    for theta in received {
        acc += theta - own;
    }
    k * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    fn example1() -> (LtiPlant, Matrix, Matrix) {
        let plant = LtiPlant::new(matops::diag(&[1.2, 0.5]), Matrix::identity(2, 2), m(1, 2, &[1.0, 0.0])).unwrap();
        (plant, m(2, 1, &[0.5, 0.45]), m(2, 2, &[0.18, 0.0, 0.0, 0.0]))
    }

    #[test]
    fn plant_dimension_checks() {
        assert!(LtiPlant::new(Matrix::zeros(2, 3), Matrix::zeros(2, 1), Matrix::zeros(1, 3)).is_err());
        assert!(LtiPlant::new(Matrix::zeros(2, 2), Matrix::zeros(3, 1), Matrix::zeros(1, 2)).is_err());
        assert!(LtiPlant::new(Matrix::zeros(2, 2), Matrix::zeros(2, 1), Matrix::zeros(1, 3)).is_err());
        assert!(LtiPlant::new(Matrix::zeros(2, 2), Matrix::zeros(2, 1), Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn canonical_form_with_printed_block_matrix() {
        let plant = LtiPlant::new(matops::diag(&[1.5, 0.5]), Matrix::identity(2, 2), m(1, 2, &[1.0, 0.0])).unwrap();
        let p = m(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let rf = canonicalize_output(&plant, Some(&p)).unwrap();
        assert_abs_diff_eq!(rf.a_bar(), m(2, 2, &[0.5, 1.0, 0.0, 1.5]), epsilon = 1e-12);
        assert_abs_diff_eq!(rf.b_bar(), m(2, 2, &[1.0, 1.0, 1.0, 0.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(&plant.c * &rf.p_inv, m(1, 2, &[0.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn canonical_form_with_header_matrix() {
        let (plant, _, _) = example1();
        let p = m(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let rf = canonicalize_output(&plant, Some(&p)).unwrap();
        assert_abs_diff_eq!(rf.a_bar(), m(2, 2, &[0.5, 0.7, 0.0, 1.2]), epsilon = 1e-12);
    }

    #[test]
    fn canonical_form_identity_when_already_canonical() {
        let a = m(3, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        let b = m(3, 1, &[1.0, 2.0, 3.0]);
        let c = m(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let plant = LtiPlant::new(a.clone(), b.clone(), c).unwrap();
        let rf = canonicalize_output(&plant, None).unwrap();
        assert_eq!(rf.p, Matrix::identity(3, 3));
        assert_eq!(rf.a11, a.view((0, 0), (1, 1)).into_owned());
        assert_eq!(rf.a22, a.view((1, 1), (2, 2)).into_owned());
        assert_eq!(rf.b2, b.view((1, 0), (2, 1)).into_owned());
    }

    #[test]
    fn rank_deficient_output_is_rejected() {
        let plant = LtiPlant::new(Matrix::identity(3, 3), Matrix::identity(3, 3), m(2, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0])).unwrap();
        let err = canonicalize_output(&plant, None).unwrap_err();
        assert!(err.to_string().contains("rank deficient"));
    }

    #[test]
    fn bad_override_is_rejected() {
        let (plant, _, _) = example1();
        assert!(canonicalize_output(&plant, Some(&Matrix::identity(2, 2))).is_err());
        assert!(canonicalize_output(&plant, Some(&m(2, 2, &[1.0, 1.0, 1.0, 1.0]))).is_err());
    }

    #[test]
    fn full_observer_examples() {
        let (plant, l, _) = example1();
        let x = Vector::from_vec(vec![0.3, -1.0]);
        let u = Vector::from_vec(vec![0.7, 0.2]);
        let next = full_observer_step(&plant, &l, &x, &u, &plant.output(&x));
        assert_abs_diff_eq!(next, plant.step(&x, &u), epsilon = 1e-15);

        let zero = Vector::zeros(2);
        let got = full_observer_step(&plant, &l, &zero, &zero, &Vector::from_vec(vec![1.0]));
        assert_abs_diff_eq!(got, Vector::from_vec(vec![0.5, 0.45]), epsilon = 1e-15);
    }

    #[test]
    fn reduced_observer_exact_estimate_stays_exact() {
        let plant = LtiPlant::new(m(2, 2, &[0.9, 0.2, -0.1, 0.8]), m(2, 1, &[1.0, 0.5]), m(1, 2, &[0.3, 1.0])).unwrap();
        let rf = canonicalize_output(&plant, None).unwrap().with_gain(m(1, 1, &[0.4])).unwrap();
        let x = Vector::from_vec(vec![1.0, -2.0]);
        let u = Vector::from_vec(vec![0.3]);
        let x1 = plant.step(&x, &u);
        let est = reduced_observer_step(&rf, &rf.unmeasured_part(&x), &u, &plant.output(&x), &plant.output(&x1));
        assert_abs_diff_eq!(est, rf.unmeasured_part(&x1), epsilon = 1e-12);
    }

    #[test]
    fn reduced_error_halves_with_printed_blocks() {
        let plant = LtiPlant::new(matops::diag(&[1.5, 0.5]), Matrix::identity(2, 2), m(1, 2, &[1.0, 0.0])).unwrap();
        let p = m(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let rf = canonicalize_output(&plant, Some(&p)).unwrap().with_gain(m(1, 1, &[0.03])).unwrap();
        let x = Vector::from_vec(vec![2.0, -1.0]);
        let u = Vector::from_vec(vec![0.1, 0.4]);
        let x1 = plant.step(&x, &u);
        let est0 = Vector::from_vec(vec![3.0]);
        let e0 = rf.unmeasured_part(&x) - &est0;
        let est1 = reduced_observer_step(&rf, &est0, &u, &plant.output(&x), &plant.output(&x1));
        let e1 = rf.unmeasured_part(&x1) - est1;
        assert_abs_diff_eq!(e1[0], 0.5 * e0[0], epsilon = 1e-12);
    }

    #[test]
    fn controller_examples() {
        let own = Vector::from_vec(vec![1.0, 2.0]);
        let k = Matrix::identity(2, 2);
        assert_eq!(controller(&k, [&own, &own], &own), Vector::zeros(2));
        assert_eq!(controller(&k, std::iter::empty(), &own), Vector::zeros(2));
        let v = Vector::from_vec(vec![0.5, -0.25]);
        assert_eq!(controller(&k, [&(&own + &v)], &own), v);

        let (_, _, k1) = example1();
        let zero = Vector::zeros(2);
        let a = Vector::from_vec(vec![1.0, 0.0]);
        let b = Vector::from_vec(vec![0.0, 1.0]);
        assert_abs_diff_eq!(controller(&k1, [&a, &b], &zero), Vector::from_vec(vec![0.18, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn gain_split_widths() {
        let g = GainSet::new(m(2, 2, &[0.05, 0.0, 0.0, -0.02]));
        let (k1, k2) = g.split(1).unwrap();
        assert_eq!(k1, m(2, 1, &[0.05, 0.0]));
        assert_eq!(k2, m(2, 1, &[0.0, -0.02]));
        assert!(g.split(3).is_err());
    }

    fn mat(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, r * c).prop_map(move |v| Matrix::from_row_slice(r, c, &v))
    }

    proptest! {
        #[test]
        fn full_error_is_autonomous(a in mat(2, 2), b in mat(2, 1), l in mat(2, 1),
                                    us in proptest::collection::vec(-3.0f64..3.0, 20),
                                    x0 in mat(2, 1), xh0 in mat(2, 1)) {
            let plant = LtiPlant::new(a, b, Matrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
            let mut x = x0.column(0).into_owned();
            let mut xh = xh0.column(0).into_owned();
            let e0 = &x - &xh;
            let err_m = &plant.a - &l * &plant.c;
            let mut pw = Matrix::identity(2, 2);
            for u in us {
                let u = Vector::from_vec(vec![u]);
                let y = plant.output(&x);
                xh = full_observer_step(&plant, &l, &xh, &u, &y);
                x = plant.step(&x, &u);
                pw = &err_m * pw;
                let diff = (&x - &xh) - &pw * &e0;
                prop_assert!(diff.abs().max() <= 1e-10 * (1.0 + x.abs().max() + xh.abs().max()));
            }
        }

        #[test]
        fn reduced_error_is_autonomous(a in mat(3, 3), b in mat(3, 2), c in mat(1, 3), lbar in mat(2, 1),
                                       us in proptest::collection::vec(-2.0f64..2.0, 30),
                                       x0 in mat(3, 1)) {
            prop_assume!(c.abs().max() > 0.1);
            let plant = LtiPlant::new(a, b, c).unwrap();
            let rf = canonicalize_output(&plant, None).unwrap().with_gain(lbar).unwrap();
            // round trip of the similarity transform
            prop_assert!((&rf.p_inv * rf.a_bar() * &rf.p - &plant.a).abs().max() <= 1e-10);
            let mut x = x0.column(0).into_owned();
            let mut est = Vector::zeros(2);
            let e0 = rf.unmeasured_part(&x) - &est;
            let em = rf.error_matrix();
            let mut pw = Matrix::identity(2, 2);
            for pair in us.chunks(2) {
                let u = Vector::from_vec(pair.to_vec());
                let x1 = plant.step(&x, &u);
                est = reduced_observer_step(&rf, &est, &u, &plant.output(&x), &plant.output(&x1));
                x = x1;
                pw = &em * pw;
                let diff = (rf.unmeasured_part(&x) - &est) - &pw * &e0;
                prop_assert!(diff.abs().max() <= 1e-10 * (1.0 + pw.abs().max()) * (1.0 + e0.abs().max()));
            }
        }
    }
}
