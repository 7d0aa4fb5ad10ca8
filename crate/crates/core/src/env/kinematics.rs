//! Planar finger kinematics. Each finger is a serial chain rooted on a
//! circle around the palm centre; link `j` points along
//! `inward + Σ_{k≤j} (q_k + offset_k)`.

pub type V2 = [f64; 2];

#[inline]
pub fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn perp(a: V2) -> V2 {
    [-a[1], a[0]]
}

#[inline]
pub fn norm(a: V2) -> f64 {
    a[0].hypot(a[1])
}

/// Fixed geometry of one finger.
#[derive(Clone, Debug)]
pub struct Finger {
    pub base: V2,
    /// Heading pointing from the base to the palm centre.
    pub inward: f64,
    pub lengths: Vec<f64>,
    pub offsets: Vec<f64>,
}

/// Tip position together with the tip Jacobian columns `∂tip/∂q_k`.
#[derive(Clone, Debug)]
pub struct TipFrame {
    pub tip: V2,
    pub jac: Vec<V2>,
}

impl Finger {
    pub fn new(base_angle: f64, base_radius: f64, lengths: &[f64], offsets: &[f64]) -> Self {
        Self {
            base: [base_radius * base_angle.cos(), base_radius * base_angle.sin()],
            inward: base_angle + std::f64::consts::PI,
            lengths: lengths.to_vec(),
            offsets: offsets.to_vec(),
        }
    }

    pub fn n_joints(&self) -> usize {
        self.lengths.len()
    }

    pub fn tip(&self, q: &[f64]) -> V2 {
        let mut p = self.base;
        let mut h = self.inward;
        for j in 0..self.n_joints() {
            h += q[j] + self.offsets[j];
            p[0] += self.lengths[j] * h.cos();
            p[1] += self.lengths[j] * h.sin();
        }
        p
    }

    pub fn frame(&self, q: &[f64], out: &mut TipFrame) {
        let n = self.n_joints();
        out.jac.resize(n, [0.0; 2]);
        let mut p = self.base;
        let mut h = self.inward;
        // Link direction perpendiculars scaled by length, accumulated from the tip back.
        for j in 0..n {
            h += q[j] + self.offsets[j];
            let (s, c) = h.sin_cos();
            p[0] += self.lengths[j] * c;
            p[1] += self.lengths[j] * s;
            out.jac[j] = [-self.lengths[j] * s, self.lengths[j] * c];
        }
        for j in (0..n.saturating_sub(1)).rev() {
            out.jac[j][0] += out.jac[j + 1][0];
            out.jac[j][1] += out.jac[j + 1][1];
        }
        out.tip = p;
    }
}

pub fn build_fingers(cfg: &super::HandConfig) -> Vec<Finger> {
    cfg.base_angles()
        .iter()
        .map(|&a| Finger::new(a, cfg.base_radius, &cfg.link_lengths, &cfg.joint_offsets))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_finite_difference() {
        let f = Finger::new(0.7, 0.09, &[0.045, 0.035], &[0.0, -1.7]);
        let q = [0.2, 1.1];
        let mut fr = TipFrame { tip: [0.0; 2], jac: Vec::new() };
        f.frame(&q, &mut fr);
        assert_eq!(fr.tip, f.tip(&q));
        let eps = 1e-7;
        for k in 0..2 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += eps;
            qm[k] -= eps;
            let (a, b) = (f.tip(&qp), f.tip(&qm));
            for d in 0..2 {
                let fd = (a[d] - b[d]) / (2.0 * eps);
                assert!((fd - fr.jac[k][d]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn straight_finger_reaches_inward() {
        let f = Finger::new(0.0, 0.09, &[0.045, 0.035], &[0.0, 0.0]);
        let t = f.tip(&[0.0, 0.0]);
        assert!((t[0] - 0.01).abs() < 1e-12 && t[1].abs() < 1e-12);
    }
}
