//! Product-integration moments of the weakly singular kernels against
//! piecewise-linear densities.
//!
//! For a cell `s in [sa, sb]` of width `D` the moments are
//! `m0 = int k(s) ds` and `m1 = int ((s - sa)/D) k(s) ds`. A density that is
//! linear on the cell contributes `(m0 - m1) v(sa) + m1 v(sb)`.

use crate::special::{gauss_rule, osc_g0, osc_g1, osc_h0, C64};

/// The kernels that occur in the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `s^{-1/2}`.
    Abel,
    /// `s^{-1/2} e^{iB/s}`.
    Osc { b: f64 },
    /// `s^{-3/2} e^{iB/s}`.
    Osc3 { b: f64 },
    /// `s^{1/2}`.
    Sqrt,
}

impl Kernel {
    /// Pointwise value, `s > 0`.
    pub fn eval(self, s: f64) -> C64 {
        match self {
            Kernel::Abel => C64::new(1.0 / s.sqrt(), 0.0),
            Kernel::Osc { b } => crate::special::cis(b / s) / s.sqrt(),
            Kernel::Osc3 { b } => crate::special::cis(b / s) / (s * s.sqrt()),
            Kernel::Sqrt => C64::new(s.sqrt(), 0.0),
        }
    }

    /// Antiderivatives `(P0, P1)` of `k(s)` and `s k(s)` vanishing at 0.
    fn antiderivatives(self, s: f64) -> (C64, C64) {
        match self {
            Kernel::Abel => {
                let r = s.max(0.0).sqrt();
                (C64::new(2.0 * r, 0.0), C64::new(2.0 / 3.0 * s.max(0.0) * r, 0.0))
            }
            Kernel::Osc { b } => (osc_g0(s, b), osc_g1(s, b)),
            Kernel::Osc3 { b } => (osc_h0(s, b), osc_g0(s, b)),
            Kernel::Sqrt => {
                let s = s.max(0.0);
                let r = s.sqrt();
                (C64::new(2.0 / 3.0 * s * r, 0.0), C64::new(0.4 * s * s * r, 0.0))
            }
        }
    }
}

/// Moments `(m0, m1)` of `kernel` on `[sa, sb]`, `0 <= sa < sb`.
pub fn cell_moments(kernel: Kernel, sa: f64, sb: f64) -> (C64, C64) {
    let d = sb - sa;
    debug_assert!(d > 0.0 && sa >= 0.0);
    if let Kernel::Abel = kernel {
        // Rationalized forms avoid the cancellation in sqrt(sb) - sqrt(sa).
        let (a, b) = (sa.sqrt(), sb.sqrt());
        let m0 = 2.0 * d / (a + b);
        let m1 = 2.0 / 3.0 * (b + 2.0 * a) * d / ((a + b) * (a + b));
        return (C64::new(m0, 0.0), C64::new(m1, 0.0));
    }
    let b = match kernel {
        Kernel::Osc { b } | Kernel::Osc3 { b } => b,
        Kernel::Sqrt => 0.0,
        Kernel::Abel => unreachable!(),
    };
    // Far from the origin and with a slowly turning phase the closed form
    // loses digits to cancellation; a Gauss rule is exact to roundoff there.
    if sa >= 32.0 * d && b * d / (sa * sa) <= 0.05 {
        let mut m0 = C64::new(0.0, 0.0);
        let mut m1 = C64::new(0.0, 0.0);
        for (s, w) in gauss_rule(8).on(sa, sb) {
            let k = w * kernel.eval(s);
            m0 += k;
            m1 += k * ((s - sa) / d);
        }
        return (m0, m1);
    }
    let (p0a, p1a) = kernel.antiderivatives(sa);
    let (p0b, p1b) = kernel.antiderivatives(sb);
    let m0 = p0b - p0a;
    let m1 = ((p1b - p1a) - sa * m0) / d;
    (m0, m1)
}

/// Near/far weights of a kernel on the uniform cells `[kh, (k+1)h]`.
#[derive(Debug, Clone)]
pub struct UniformWeights {
    /// Weight of the node at `s = kh`.
    pub near: Vec<C64>,
    /// Weight of the node at `s = (k+1)h`.
    pub far: Vec<C64>,
    /// `near[k] + far[k-1]` for `k >= 1`; index 0 holds `near[0]`.
    pub comb: Vec<C64>,
}

impl UniformWeights {
    pub fn new(kernel: Kernel, h: f64, cells: usize, scale: C64) -> Self {
        let (near, far): (Vec<C64>, Vec<C64>) = (0..cells)
            .map(|k| {
                let (m0, m1) = cell_moments(kernel, k as f64 * h, (k + 1) as f64 * h);
                (scale * (m0 - m1), scale * m1)
            })
            .unzip();
        let comb = (0..cells)
            .map(|k| if k == 0 { near[0] } else { near[k] + far[k - 1] })
            .collect();
        UniformWeights { near, far, comb }
    }

    pub fn len(&self) -> usize {
        self.near.len()
    }

    pub fn is_empty(&self) -> bool {
        self.near.is_empty()
    }
}
