//! Penalty contact between point fingertips and the object disk, with a
//! smooth Coulomb friction law.

use super::kinematics::{dot, perp, Finger, TipFrame, V2};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectState {
    pub pos: V2,
    pub yaw: f64,
    pub vel: V2,
    pub omega: f64,
}

/// Contact parameters active for one episode.
#[derive(Clone, Copy, Debug)]
pub struct ContactParams {
    pub radius: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    pub v_eps: f64,
    /// Object weight carried by the fingertips, N.
    pub load_force: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TipContact {
    pub active: bool,
    pub depth: f64,
    /// Unit vector from object centre towards the tip.
    pub normal: V2,
    /// `perp(normal)`; positive object spin moves the surface along it.
    pub tangent: V2,
    pub f_n: f64,
    /// Friction force on the tip along `tangent`.
    pub f_t: f64,
    /// `-∂f_t/∂v_t`, used for the linearly implicit friction solve.
    pub slope: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ContactReport {
    pub tips: Vec<TipContact>,
    /// Net force and torque the fingertips exert on the object.
    pub force: V2,
    pub torque: f64,
    /// Contact plus weight-load torque per joint, finger-major.
    pub joint_torque: Vec<f64>,
    pub n_contacts: usize,
}

/// Evaluates tip contacts for every finger. `frames` must hold the current
/// tip frames and `qdot` the joint velocities in finger-major order.
pub fn contact_forces(
    fingers: &[Finger],
    frames: &[TipFrame],
    qdot: &[f64],
    obj: &ObjectState,
    p: &ContactParams,
    out: &mut ContactReport,
) {
    let nf = fingers.len();
    let jpf = fingers.first().map_or(0, Finger::n_joints);
    out.tips.clear();
    out.tips.resize(nf, TipContact::default());
    out.joint_torque.clear();
    out.joint_torque.resize(nf * jpf, 0.0);
    out.force = [0.0; 2];
    out.torque = 0.0;
    out.n_contacts = 0;

    for (i, fr) in frames.iter().enumerate() {
        let d = [fr.tip[0] - obj.pos[0], fr.tip[1] - obj.pos[1]];
        let dist = d[0].hypot(d[1]);
        let depth = p.radius - dist;
        if depth <= 0.0 || dist < 1e-9 {
            continue;
        }
        let n = [d[0] / dist, d[1] / dist];
        let t = perp(n);
        let qd = &qdot[i * jpf..(i + 1) * jpf];
        let mut v_tip = [0.0; 2];
        for (k, col) in fr.jac.iter().enumerate() {
            v_tip[0] += col[0] * qd[k];
            v_tip[1] += col[1] * qd[k];
        }
        let surf = [obj.vel[0] + obj.omega * p.radius * t[0], obj.vel[1] + obj.omega * p.radius * t[1]];
        let v_rel = [v_tip[0] - surf[0], v_tip[1] - surf[1]];
        let depth_rate = -dot(v_rel, n);
        let f_n = (p.stiffness * depth + p.damping * depth_rate).max(0.0);
        let v_t = dot(v_rel, t);
        let th = (v_t / p.v_eps).tanh();
        let f_t = -p.friction * f_n * th;
        let slope = p.friction * f_n * (1.0 - th * th) / p.v_eps;

        let f_tip = [f_n * n[0] + f_t * t[0], f_n * n[1] + f_t * t[1]];
        out.force[0] -= f_tip[0];
        out.force[1] -= f_tip[1];
        out.torque -= f_t * p.radius;
        for (k, col) in fr.jac.iter().enumerate() {
            out.joint_torque[i * jpf + k] += dot(*col, f_tip);
        }
        out.tips[i] = TipContact {
            active: true,
            depth,
            normal: n,
            tangent: t,
            f_n,
            f_t,
            slope,
        };
        out.n_contacts += 1;
    }

    if out.n_contacts > 0 && p.load_force > 0.0 {
        let share = p.load_force / out.n_contacts as f64;
        for (i, fr) in frames.iter().enumerate() {
            let tip = &out.tips[i];
            if !tip.active {
                continue;
            }
            let f = [share * tip.normal[0], share * tip.normal[1]];
            for (k, col) in fr.jac.iter().enumerate() {
                out.joint_torque[i * jpf + k] += dot(*col, f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::kinematics::Finger;

    fn setup(q: [f64; 2]) -> (Vec<Finger>, Vec<TipFrame>) {
        let f = vec![Finger::new(0.0, 0.09, &[0.045, 0.035], &[0.0, -1.7])];
        let mut fr = TipFrame { tip: [0.0; 2], jac: Vec::new() };
        f[0].frame(&q, &mut fr);
        (f, vec![fr])
    }

    fn params(load: f64) -> ContactParams {
        ContactParams {
            radius: 0.0275,
            stiffness: 3000.0,
            damping: 5.0,
            friction: 0.8,
            v_eps: 0.02,
            load_force: load,
        }
    }

    #[test]
    fn no_penetration_gives_zero_wrench() {
        let (f, fr) = setup([0.0, 0.45]);
        let mut out = ContactReport::default();
        contact_forces(&f, &fr, &[0.0, 0.0], &ObjectState::default(), &params(1.0), &mut out);
        assert_eq!(out.n_contacts, 0);
        assert_eq!(out.force, [0.0, 0.0]);
        assert_eq!(out.torque, 0.0);
        assert!(out.joint_torque.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn friction_vanishes_at_rest() {
        let (f, fr) = setup([0.0, 1.3]);
        let mut out = ContactReport::default();
        contact_forces(&f, &fr, &[0.0, 0.0], &ObjectState::default(), &params(0.0), &mut out);
        assert_eq!(out.n_contacts, 1);
        assert!(out.tips[0].f_n > 0.0);
        assert_eq!(out.tips[0].f_t, 0.0);
        assert_eq!(out.torque, 0.0);
    }

    #[test]
    fn load_is_linear_in_mass() {
        let (f, fr) = setup([0.0, 1.3]);
        let zero = {
            let mut o = ContactReport::default();
            contact_forces(&f, &fr, &[0.0, 0.0], &ObjectState::default(), &params(0.0), &mut o);
            [o.joint_torque[0], o.joint_torque[1]]
        };
        let load = |l: f64| {
            let mut o = ContactReport::default();
            contact_forces(&f, &fr, &[0.0, 0.0], &ObjectState::default(), &params(l), &mut o);
            [o.joint_torque[0] - zero[0], o.joint_torque[1] - zero[1]]
        };
        let (a, b) = (load(0.5), load(1.0));
        for k in 0..2 {
            assert!(a[k].abs() > 0.0);
            assert!((b[k] - 2.0 * a[k]).abs() < 1e-12);
            // Same sign as the contact's own joint torque: the load opposes closing.
            assert!(a[k] * zero[k] > 0.0);
        }
    }
}
