use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::{JointVec, Leg, RobotModel, NUM_LEGS};

/// Foot pose expressed in both frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootKinematics {
    pub position_base: Vector3<f64>,
    pub position: Vector3<f64>,
    /// Unit outward normal of the magnet face, world frame.
    pub face_normal: Vector3<f64>,
    pub foot_rotation: Rotation3<f64>,
}

/// Closed-form leg geometry: hip roll about x, a lateral hip link, then
/// thigh and calf pitch about y.
#[derive(Clone, Copy, Debug)]
pub struct LegKinematics {
    hips: [Vector3<f64>; NUM_LEGS],
    l1: f64,
    l2: f64,
    l3: f64,
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

impl LegKinematics {
    pub fn new(model: &RobotModel) -> Self {
        let [l1, l2, l3] = model.link_lengths;
        Self {
            hips: model.hip_offsets.map(Vector3::from),
            l1,
            l2,
            l3,
        }
    }

    fn angles(q: &JointVec, leg: Leg) -> (f64, f64, f64) {
        let i = 3 * leg as usize;
        (q[i], q[i + 1], q[i + 2])
    }

    /// Foot position relative to the hip mount, base frame.
    pub fn foot_in_hip(&self, leg: Leg, q: &JointVec) -> Vector3<f64> {
        let (a, b, c) = Self::angles(q, leg);
        let planar = Vector3::new(
            -self.l2 * b.sin() - self.l3 * (b + c).sin(),
            leg.side() * self.l1,
            -self.l2 * b.cos() - self.l3 * (b + c).cos(),
        );
        rot_x(a) * planar
    }

    pub fn foot_in_base(&self, leg: Leg, q: &JointVec) -> Vector3<f64> {
        self.hips[leg as usize] + self.foot_in_hip(leg, q)
    }

    /// d(foot_in_base)/d(q_leg), columns hip, thigh, calf.
    pub fn jacobian(&self, leg: Leg, q: &JointVec) -> Matrix3<f64> {
        let (a, b, c) = Self::angles(q, leg);
        let (sa, ca) = a.sin_cos();
        let y = leg.side() * self.l1;
        let z = -self.l2 * b.cos() - self.l3 * (b + c).cos();
        let d_hip = Vector3::new(0.0, -y * sa - z * ca, y * ca - z * sa);
        let rx = rot_x(a);
        let d_thigh = rx
            * Vector3::new(
                -self.l2 * b.cos() - self.l3 * (b + c).cos(),
                0.0,
                self.l2 * b.sin() + self.l3 * (b + c).sin(),
            );
        let d_calf = rx * Vector3::new(-self.l3 * (b + c).cos(), 0.0, self.l3 * (b + c).sin());
        Matrix3::from_columns(&[d_hip, d_thigh, d_calf])
    }

    /// d/dt(J) q̇ for one leg, by central difference along q̇.
    pub fn jacobian_rate_times_qd(&self, leg: Leg, q: &JointVec, qd: &JointVec) -> Vector3<f64> {
        let i = 3 * leg as usize;
        let v = qd.fixed_rows::<3>(i).into_owned();
        let speed = v.norm();
        if speed < 1e-12 {
            return Vector3::zeros();
        }
        let h = 1e-5 / speed;
        let mut qp = *q;
        let mut qm = *q;
        for k in 0..3 {
            qp[i + k] += h * v[k];
            qm[i + k] -= h * v[k];
        }
        (self.jacobian(leg, &qp) - self.jacobian(leg, &qm)) * v / (2.0 * h)
    }

    /// Calf segment orientation in the base frame.
    pub fn calf_rotation(&self, leg: Leg, q: &JointVec) -> Rotation3<f64> {
        let (a, b, c) = Self::angles(q, leg);
        Rotation3::from_axis_angle(&Vector3::x_axis(), a) * Rotation3::from_axis_angle(&Vector3::y_axis(), b + c)
    }

    /// Closed-form inverse for a foot position relative to the hip, with
    /// the knee bent backwards. Unreachable targets are projected onto the
    /// workspace boundary.
    pub fn inverse(&self, leg: Leg, p: &Vector3<f64>) -> [f64; 3] {
        let y_planar = leg.side() * self.l1;
        let r2 = p.y * p.y + p.z * p.z;
        let z_planar = -(r2 - self.l1 * self.l1).max(1e-9).sqrt();
        let a = p.z.atan2(p.y) - z_planar.atan2(y_planar);
        let a = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        let (xx, zz) = (-p.x, -z_planar);
        let reach = (xx * xx + zz * zz).sqrt();
        let max_reach = self.l2 + self.l3 - 1e-9;
        let min_reach = (self.l2 - self.l3).abs() + 1e-9;
        let scale = reach.clamp(min_reach, max_reach) / reach.max(1e-12);
        let (xx, zz) = (xx * scale, zz * scale);
        let cos_c = (xx * xx + zz * zz - self.l2 * self.l2 - self.l3 * self.l3) / (2.0 * self.l2 * self.l3);
        let c = -cos_c.clamp(-1.0, 1.0).acos();
        let b = xx.atan2(zz) - (self.l3 * c.sin()).atan2(self.l2 + self.l3 * c.cos());
        [a, b, c]
    }
}

/// Roll-pitch-yaw composed as Rz(yaw) Ry(pitch) Rx(roll).
pub fn rpy_rotation(rpy: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z)
}

/// World foot positions and magnet-face normals. Joint angles outside their
/// limits are clamped.
pub fn forward_kinematics(
    model: &RobotModel,
    base_position: &Vector3<f64>,
    base_orientation: &UnitQuaternion<f64>,
    q: &JointVec,
    ankle_rpy: &[Vector3<f64>; NUM_LEGS],
) -> [FootKinematics; NUM_LEGS] {
    let kin = LegKinematics::new(model);
    let q = model.clamp_joints(q);
    let rot = base_orientation.to_rotation_matrix();
    Leg::ALL.map(|leg| {
        let i = leg as usize;
        let position_base = kin.foot_in_base(leg, &q);
        let foot_rotation = rot * kin.calf_rotation(leg, &q) * rpy_rotation(&ankle_rpy[i]);
        FootKinematics {
            position_base,
            position: base_position + rot * position_base,
            face_normal: foot_rotation * -Vector3::z(),
            foot_rotation,
        }
    })
}
