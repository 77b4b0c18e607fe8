//! Dispersal kernels and the assembled nonlocal operators.
//!
//! A kernel `k(x, y)` is the rate at which individuals jump from `y` to `x`.
//! Every family here is a translation kernel `k(x, y) = ρ(x - y - drift)` with a
//! probability density `ρ`, so `∫_ℝ k(x, y) dy = ∫_ℝ k(y, x) dy = 1` holds in
//! closed form. A nonzero drift makes the kernel nonsymmetric.
//!
//! The operator only integrates over Ω, so in lethal mode ([`BoundaryMode::Lethal`])
//! mass that jumps out of Ω is lost. In no-flux mode the loss term is the
//! outgoing mass that stays in Ω, and the total population is conserved.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVectorView, DVectorViewMut};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{same_grid, Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    Gaussian,
    Tent,
    #[serde(alias = "shifted-gaussian")]
    NonsymmetricShiftedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Kernel width: standard deviation for the Gaussians, half-support for the tent.
    pub scale: f64,
    /// Asymmetry offset; 0 gives a symmetric kernel.
    #[serde(default)]
    pub drift: f64,
}

impl KernelSpec {
    pub fn gaussian(scale: f64) -> KernelSpec {
        KernelSpec {
            family: KernelFamily::Gaussian,
            scale,
            drift: 0.0,
        }
    }

    pub fn tent(scale: f64) -> KernelSpec {
        KernelSpec {
            family: KernelFamily::Tent,
            scale,
            drift: 0.0,
        }
    }

    pub fn shifted_gaussian(scale: f64, drift: f64) -> KernelSpec {
        KernelSpec {
            family: KernelFamily::NonsymmetricShiftedGaussian,
            scale,
            drift,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel scale must be positive, got {}",
                self.scale
            )));
        }
        if !self.drift.is_finite() {
            return Err(Error::InvalidParameter("kernel drift must be finite".into()));
        }
        // k(x, x) = ρ(-drift) must stay positive.
        if self.family == KernelFamily::Tent && self.drift.abs() >= self.scale {
            return Err(Error::InvalidParameter(format!(
                "tent kernel with |drift| = {} >= scale = {} has k(x, x) = 0",
                self.drift.abs(),
                self.scale
            )));
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.drift == 0.0
    }

    /// Kernel value k(x, y).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let z = x - y - self.drift;
        let s = self.scale;
        match self.family {
            KernelFamily::Gaussian | KernelFamily::NonsymmetricShiftedGaussian => {
                (-0.5 * (z / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
            }
            KernelFamily::Tent => {
                let r = z.abs() / s;
                if r >= 1.0 {
                    0.0
                } else {
                    (1.0 - r) / s
                }
            }
        }
    }
}

/// Kernel value k(x, y).
pub fn eval_kernel(spec: &KernelSpec, x: f64, y: f64) -> f64 {
    spec.eval(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// Lethal boundary: `K[φ] = ∫_Ω k(x,y) φ(y) dy - φ(x)`.
    #[serde(rename = "D", alias = "lethal")]
    Lethal,
    /// No-flux boundary: `K[φ] = ∫_Ω k(x,y) φ(y) dy - ∫_Ω k(y,x) dy φ(x)`.
    #[serde(rename = "N", alias = "no-flux")]
    NoFlux,
}

/// Dense discretization of `rate · K` on a grid.
#[derive(Debug, Clone)]
pub struct DispersalOperator {
    grid: Arc<Grid>,
    kernel: KernelSpec,
    mode: BoundaryMode,
    rate: f64,
    matrix: DMatrix<f64>,
    strict_positive: bool,
}

impl DispersalOperator {
    /// Assembles `rate · K`. Off-diagonal entries are `rate · k(x_i, x_j) · w_j`.
    pub fn assemble(
        kernel: &KernelSpec,
        grid: &Arc<Grid>,
        mode: BoundaryMode,
        rate: f64,
    ) -> Result<DispersalOperator> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dispersal rate must be positive, got {rate}"
            )));
        }
        kernel.validate()?;
        let n = grid.len();
        let x = grid.nodes();
        let w = grid.weights();
        let k = DMatrix::from_fn(n, n, |i, j| kernel.eval(x[i], x[j]));
        let strict_positive = k.iter().all(|&v| v > 0.0);

        let mut matrix = DMatrix::from_fn(n, n, |i, j| rate * k[(i, j)] * w[j]);
        for i in 0..n {
            let loss = match mode {
                BoundaryMode::Lethal => 1.0,
                // Outgoing mass that lands inside Ω: Σ_j k(x_j, x_i) w_j.
                BoundaryMode::NoFlux => (0..n).map(|j| k[(j, i)] * w[j]).sum(),
            };
            matrix[(i, i)] = rate * (k[(i, i)] * w[i] - loss);
        }
        Ok(DispersalOperator {
            grid: grid.clone(),
            kernel: *kernel,
            mode,
            rate,
            matrix,
            strict_positive,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// True iff `k > 0` on every pair of grid nodes.
    pub fn strict_positive(&self) -> bool {
        self.strict_positive
    }

    /// Largest diagonal magnitude divided by the rate.
    pub fn kappa(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.matrix[(i, i)].abs())
            .fold(0.0, f64::max)
            / self.rate
    }

    /// Smallest off-diagonal entry (nonnegative for a Metzler matrix).
    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.grid.len();
        let mut m = f64::INFINITY;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    m = m.min(self.matrix[(i, j)]);
                }
            }
        }
        m
    }

    /// Diagnostic `∫_Ω k(x_i, y) dy` per node: the fraction of mass arriving at
    /// `x_i` that originates inside Ω.
    pub fn retained_mass(&self) -> Field {
        let n = self.grid.len();
        let x = self.grid.nodes();
        let w = self.grid.weights();
        let values = (0..n)
            .map(|i| (0..n).map(|j| self.kernel.eval(x[i], x[j]) * w[j]).sum())
            .collect();
        Field::from_raw(self.grid.clone(), values)
    }

    /// `dst = rate · K[src]`, slices indexed by node.
    pub fn apply_into(&self, src: &[f64], dst: &mut [f64]) {
        let n = self.grid.len();
        let x = DVectorView::from_slice(src, n);
        let mut y = DVectorViewMut::from_slice(dst, n);
        y.gemv(1.0, &self.matrix, &x, 0.0);
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        if !same_grid(&self.grid, f.grid()) {
            return Err(Error::GridMismatch(
                "operator and field live on different grids".into(),
            ));
        }
        let mut out = vec![0.0; self.grid.len()];
        self.apply_into(f.values(), &mut out);
        Ok(Field::from_raw(self.grid.clone(), out))
    }
}

/// Matrix-vector product `rate · K[f]`.
pub fn apply(op: &DispersalOperator, f: &Field) -> Result<Field> {
    op.apply(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Simpson on [lo, hi]; test-only oracle for kernel integrals.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let c = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += c * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gaussian_peak_value() {
        let s = 0.2;
        let k = KernelSpec::gaussian(s);
        assert!((eval_kernel(&k, 0.3, 0.3) - 1.0 / (s * (2.0 * PI).sqrt())).abs() < 1e-14);
    }

    #[test]
    fn tent_has_compact_support() {
        let k = KernelSpec::tent(0.1);
        assert_eq!(k.eval(0.5, 0.61), 0.0);
        assert_eq!(k.eval(0.5, 0.2), 0.0);
        assert!(k.eval(0.5, 0.55) > 0.0);
    }

    #[test]
    fn shifted_gaussian_is_nonsymmetric() {
        let k = KernelSpec::shifted_gaussian(0.1, 0.05);
        assert!((k.eval(0.3, 0.4) - k.eval(0.4, 0.3)).abs() > 1e-3);
        assert!(k.eval(0.3, 0.3) > 0.0);
    }

    #[test]
    fn whole_line_normalization() {
        for spec in [
            KernelSpec::gaussian(0.1),
            KernelSpec::tent(0.3),
            KernelSpec::shifted_gaussian(0.15, 0.07),
        ] {
            let in_y = simpson(|y| spec.eval(0.2, y), -5.0, 5.0, 200_000);
            let in_x = simpson(|x| spec.eval(x, 0.2), -5.0, 5.0, 200_000);
            assert!((in_y - 1.0).abs() < 1e-8, "{spec:?}: {in_y}");
            assert!((in_x - 1.0).abs() < 1e-8, "{spec:?}: {in_x}");
        }
    }

    #[test]
    fn rejects_bad_rate_and_kernel() {
        let g = Grid::new(0.0, 1.0, 10).unwrap();
        let k = KernelSpec::gaussian(0.1);
        assert!(DispersalOperator::assemble(&k, &g, BoundaryMode::Lethal, 0.0).is_err());
        assert!(DispersalOperator::assemble(&k, &g, BoundaryMode::Lethal, -1.0).is_err());
        let bad = KernelSpec {
            family: KernelFamily::Tent,
            scale: 0.1,
            drift: 0.2,
        };
        assert!(DispersalOperator::assemble(&bad, &g, BoundaryMode::NoFlux, 1.0).is_err());
        assert!(DispersalOperator::assemble(&KernelSpec::gaussian(-1.0), &g, BoundaryMode::NoFlux, 1.0).is_err());
    }

    #[test]
    fn no_flux_symmetric_annihilates_constants() {
        let g = Grid::new(0.0, 1.0, 40).unwrap();
        let op = DispersalOperator::assemble(&KernelSpec::gaussian(0.2), &g, BoundaryMode::NoFlux, 0.7).unwrap();
        let out = op.apply(&Field::constant(g, 3.0)).unwrap();
        assert!(out.norm_inf() < 1e-13);
    }

    #[test]
    fn lethal_loses_mass_at_the_boundary() {
        // Oracle: ∫_0^1 k(x, y) dy - 1 by fine Simpson quadrature.
        let g = Grid::new(0.0, 1.0, 50).unwrap();
        let spec = KernelSpec::gaussian(0.1);
        let op = DispersalOperator::assemble(&spec, &g, BoundaryMode::Lethal, 1.0).unwrap();
        let out = op.apply(&Field::constant(g.clone(), 1.0)).unwrap();
        assert!(out.max() < 0.0 && out.min() > -1.0);
        let x0 = g.nodes()[0];
        let oracle = simpson(|y| spec.eval(x0, y), 0.0, 1.0, 20_000) - 1.0;
        // about -0.45 at the first node; midpoint rule error is O(h^2)
        assert!((out.values()[0] - oracle).abs() < 5e-3, "{} vs {oracle}", out.values()[0]);
        assert!(out.values()[0] < out.values()[25]);
    }

    #[test]
    fn zero_maps_to_zero_and_grid_mismatch_errors() {
        let g = Grid::new(0.0, 1.0, 10).unwrap();
        let op = DispersalOperator::assemble(&KernelSpec::tent(0.3), &g, BoundaryMode::Lethal, 1.0).unwrap();
        assert_eq!(op.apply(&Field::zeros(g)).unwrap().norm_inf(), 0.0);
        let other = Grid::new(0.0, 1.0, 11).unwrap();
        assert!(matches!(op.apply(&Field::zeros(other)), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn consistency_under_refinement() {
        // Error of rate·K[f] against a fine reference shrinks like h^2.
        let spec = KernelSpec::gaussian(0.15);
        let smooth = |x: f64| 1.0 + (2.0 * PI * x).cos();
        let exact = |x: f64| simpson(|y| spec.eval(x, y) * smooth(y), 0.0, 1.0, 20_000) - smooth(x);
        let err = |n: usize| {
            let g = Grid::new(0.0, 1.0, n).unwrap();
            let op = DispersalOperator::assemble(&spec, &g, BoundaryMode::Lethal, 1.0).unwrap();
            let out = op.apply(&Field::from_fn(g.clone(), smooth).unwrap()).unwrap();
            g.nodes()
                .iter()
                .zip(out.values())
                .map(|(&x, v)| (v - exact(x)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(40), err(80));
        let order = (e1 / e2).log2();
        assert!(order > 1.7, "observed order {order} ({e1}, {e2})");
    }

    fn any_kernel() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            (0.05f64..0.5).prop_map(KernelSpec::gaussian),
            (0.05f64..0.5).prop_map(KernelSpec::tent),
            (0.05f64..0.5, -0.2f64..0.2).prop_map(|(s, d)| KernelSpec::shifted_gaussian(s, d)),
        ]
    }

    proptest! {
        #[test]
        fn metzler_and_mass_conservation(
            spec in any_kernel(),
            rate in 0.01f64..5.0,
            vals in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            let g = Grid::new(0.0, 1.0, 30).unwrap();
            let f = Field::new(g.clone(), vals).unwrap();
            let n_op = DispersalOperator::assemble(&spec, &g, BoundaryMode::NoFlux, rate).unwrap();
            let d_op = DispersalOperator::assemble(&spec, &g, BoundaryMode::Lethal, rate).unwrap();
            prop_assert!(n_op.min_off_diagonal() >= 0.0);
            prop_assert!(d_op.min_off_diagonal() >= 0.0);
            let mass = n_op.apply(&f).unwrap().integrate();
            prop_assert!(mass.abs() <= 1e-10 * rate * f.norm_inf().max(1e-300));
            let one = d_op.apply(&Field::constant(g.clone(), 1.0)).unwrap();
            // Gaussians are resolved to rounding; the tent's kink gives an O((h/s)^2) quadrature excess.
            let excess = match spec.family {
                KernelFamily::Tent => rate * (g.h() / spec.scale).powi(2),
                _ => 1e-12 * rate,
            };
            prop_assert!(one.max() <= excess);
            prop_assert!(one.min() >= -rate);
        }

        #[test]
        fn linearity(
            spec in any_kernel(),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
            f in proptest::collection::vec(-1.0f64..1.0, 12),
            h in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let g = Grid::new(0.0, 1.0, 12).unwrap();
            let op = DispersalOperator::assemble(&spec, &g, BoundaryMode::NoFlux, 1.3).unwrap();
            let f = Field::new(g.clone(), f).unwrap();
            let h = Field::new(g.clone(), h).unwrap();
            let combo = (a * &f).axpy(b, &h).unwrap();
            let lhs = op.apply(&combo).unwrap();
            let rhs = (a * &op.apply(&f).unwrap()).axpy(b, &op.apply(&h).unwrap()).unwrap();
            prop_assert!(lhs.dist_inf(&rhs).unwrap() < 1e-12);
        }
    }
}
