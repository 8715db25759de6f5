use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::contact::{disc_rectangle_contact, projected_gauss_seidel, Row, RowKind};
use super::model::{ModelError, ObjectModel, RobotModel};
use crate::geometry::{perp, wrap_angle, Pose2, Twist2, Vec2};

/// Duration of the single simulation step used to sample the impact map.
pub const IMPACT_MAP_STEP: f64 = 0.005;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("contact solver did not converge within {iterations} iterations at t = {time:.4} s")]
    SolverDiverged { iterations: usize, time: f64 },
    #[error("time step must be positive (got {0})")]
    InvalidTimeStep(f64),
    #[error("expected {expected} torque vectors, got {got}")]
    TorqueShape { expected: usize, got: usize },
    #[error("mass matrix of robot {0} is not positive definite")]
    Singular(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Solver and contact constants of the plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Gravity magnitude used for the object's normal load on the ground.
    #[serde(rename = "gravity_m_s2")]
    pub gravity: f64,
    /// In-plane gravity acting on the arms (zero for horizontal arms).
    #[serde(rename = "arm_gravity_m_s2")]
    pub arm_gravity: [f64; 2],
    #[serde(rename = "penetration_tolerance_m")]
    pub penetration_tolerance: f64,
    #[serde(rename = "activation_gap_m")]
    pub activation_gap: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Fraction of penetration removed per step.
    pub stabilization: f64,
    /// Effective radius of the object-ground torsional friction, as a
    /// fraction of the mean half extent.
    pub torsion_radius_factor: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            arm_gravity: [0.0, 0.0],
            penetration_tolerance: 1e-4,
            activation_gap: 1e-3,
            max_iterations: 200,
            tolerance: 1e-10,
            stabilization: 0.2,
            torsion_radius_factor: 2.0 / 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectState {
    pub pose: Pose2,
    pub twist: Twist2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPoint {
    pub robot: usize,
    pub position: Vec2,
    /// Unit normal from the object into the end effector.
    pub normal: Vec2,
    pub gap: f64,
    /// Positive when separating.
    pub normal_rel_velocity: f64,
    /// Impulses of the last solve, reused as a warm start.
    pub normal_impulse: f64,
    pub tangent_impulse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub robots: Vec<RobotState>,
    pub object: ObjectState,
    pub time: f64,
    pub active_contacts: Vec<ContactPoint>,
    pub ground_impulse: [f64; 3],
}

impl WorldState {
    pub fn min_gap(&self) -> Option<f64> {
        self.active_contacts.iter().map(|c| c.gap).reduce(f64::min)
    }
}

/// Robots plus object: the simulated plant.
#[derive(Clone, Debug)]
pub struct Plant {
    pub robots: Vec<RobotModel>,
    pub object: ObjectModel,
    pub params: SimParams,
}

struct Layout {
    offsets: Vec<usize>,
    object: usize,
    dim: usize,
}

impl Plant {
    pub fn new(robots: Vec<RobotModel>, object: ObjectModel, params: SimParams) -> Result<Self, ModelError> {
        for r in &robots {
            r.validate()?;
        }
        object.validate()?;
        Ok(Self { robots, object, params })
    }

    fn layout(&self) -> Layout {
        let mut offsets = Vec::with_capacity(self.robots.len());
        let mut at = 0;
        for r in &self.robots {
            offsets.push(at);
            at += r.n_links();
        }
        Layout {
            offsets,
            object: at,
            dim: at + 3,
        }
    }

    fn arm_gravity(&self) -> Vec2 {
        Vec2::new(self.params.arm_gravity[0], self.params.arm_gravity[1])
    }

    /// Builds a world at rest with the given configurations and object pose,
    /// contacts evaluated.
    pub fn world_at(&self, robots: Vec<RobotState>, object_pose: Pose2) -> WorldState {
        let mut w = WorldState {
            robots,
            object: ObjectState {
                pose: object_pose,
                twist: Twist2::default(),
            },
            time: 0.0,
            active_contacts: Vec::new(),
            ground_impulse: [0.0; 3],
        };
        w.active_contacts = self.detect_contacts(&w, &[]);
        w
    }

    /// End-effector contacts with the object within the activation gap.
    pub fn detect_contacts(&self, world: &WorldState, previous: &[ContactPoint]) -> Vec<ContactPoint> {
        let mut out = Vec::new();
        let obj = &world.object;
        for (i, (model, state)) in self.robots.iter().zip(&world.robots).enumerate() {
            let (p_ee, _) = model.forward_kinematics(&state.q);
            let geo = disc_rectangle_contact(&p_ee, model.ee_radius, &obj.pose, self.object.half_extents);
            if geo.gap > self.params.activation_gap {
                continue;
            }
            let v_rel = self.relative_point_velocity(i, world, &p_ee, &geo.point);
            let warm = previous.iter().find(|c| c.robot == i);
            out.push(ContactPoint {
                robot: i,
                position: geo.point,
                normal: geo.normal,
                gap: geo.gap,
                normal_rel_velocity: geo.normal.dot(&v_rel),
                normal_impulse: warm.map_or(0.0, |c| c.normal_impulse),
                tangent_impulse: warm.map_or(0.0, |c| c.tangent_impulse),
            });
        }
        out
    }

    fn relative_point_velocity(&self, robot: usize, world: &WorldState, p_ee: &Vec2, point: &Vec2) -> Vec2 {
        let model = &self.robots[robot];
        let st = &world.robots[robot];
        let jac = model.offset_point_jacobian(&st.q, &(point - p_ee));
        let v_robot = jac * &st.dq;
        let obj = &world.object;
        let r = point - obj.pose.position();
        let v_obj = obj.twist.linear() + obj.twist.omega * perp(&r);
        Vec2::new(v_robot[0], v_robot[1]) - v_obj
    }

    /// Constraint rows (normal, then tangent) for end-effector contacts.
    fn contact_rows(&self, world: &WorldState, contacts: &[ContactPoint], layout: &Layout, target: impl Fn(&ContactPoint) -> f64) -> Vec<Row> {
        let mut normals = Vec::new();
        let mut tangents = Vec::new();
        let obj_pos = world.object.pose.position();
        for (k, c) in contacts.iter().enumerate() {
            let model = &self.robots[c.robot];
            let st = &world.robots[c.robot];
            let (p_ee, _) = model.forward_kinematics(&st.q);
            let jp = model.offset_point_jacobian(&st.q, &(c.position - p_ee));
            let r = c.position - obj_pos;
            let t = perp(&c.normal);
            for (dir, is_normal) in [(c.normal, true), (t, false)] {
                let mut jac = DVector::zeros(layout.dim);
                let off = layout.offsets[c.robot];
                for j in 0..model.n_links() {
                    jac[off + j] = dir.x * jp[(0, j)] + dir.y * jp[(1, j)];
                }
                // minus the object's material point velocity
                jac[layout.object] = -dir.x;
                jac[layout.object + 1] = -dir.y;
                jac[layout.object + 2] = -dir.dot(&perp(&r));
                if is_normal {
                    normals.push(Row {
                        jac,
                        target: target(c),
                        kind: RowKind::Normal,
                    });
                } else {
                    tangents.push(Row {
                        jac,
                        target: 0.0,
                        kind: RowKind::Tangent {
                            normal_row: k,
                            mu: self.object.contact_friction_mu,
                        },
                    });
                }
            }
        }
        normals.extend(tangents);
        normals
    }

    fn inverse_mass_products(&self, world: &WorldState, rows: &[Row], layout: &Layout) -> Result<Vec<DVector<f64>>, SimError> {
        let chols = self.inertia_factors(world)?;
        Ok(rows
            .iter()
            .map(|row| self.apply_inverse_mass(&chols, &row.jac, layout))
            .collect())
    }

    fn inertia_factors(&self, world: &WorldState) -> Result<Vec<Cholesky<f64, nalgebra::Dyn>>, SimError> {
        self.robots
            .iter()
            .zip(&world.robots)
            .enumerate()
            .map(|(i, (m, s))| Cholesky::new(m.joint_space_inertia(&s.q)).ok_or(SimError::Singular(i)))
            .collect()
    }

    fn apply_inverse_mass(&self, chols: &[Cholesky<f64, nalgebra::Dyn>], v: &DVector<f64>, layout: &Layout) -> DVector<f64> {
        let mut out = DVector::zeros(layout.dim);
        for (i, (m, ch)) in self.robots.iter().zip(chols).enumerate() {
            let n = m.n_links();
            let off = layout.offsets[i];
            let seg = ch.solve(&v.rows(off, n).into_owned());
            out.rows_mut(off, n).copy_from(&seg);
        }
        let o = layout.object;
        out[o] = v[o] / self.object.mass;
        out[o + 1] = v[o + 1] / self.object.mass;
        out[o + 2] = v[o + 2] / self.object.inertia;
        out
    }

    fn stack_velocities(&self, world: &WorldState, layout: &Layout) -> DVector<f64> {
        let mut u = DVector::zeros(layout.dim);
        for (i, s) in world.robots.iter().enumerate() {
            u.rows_mut(layout.offsets[i], s.dq.len()).copy_from(&s.dq);
        }
        let t = world.object.twist;
        u[layout.object] = t.vx;
        u[layout.object + 1] = t.vy;
        u[layout.object + 2] = t.omega;
        u
    }

    fn unstack_velocities(&self, world: &mut WorldState, u: &DVector<f64>, layout: &Layout) {
        for (i, s) in world.robots.iter_mut().enumerate() {
            let n = s.dq.len();
            s.dq.copy_from(&u.rows(layout.offsets[i], n));
        }
        let o = layout.object;
        world.object.twist = Twist2::new(u[o], u[o + 1], u[o + 2]);
    }

    /// Total kinetic energy of arms (including motor inertia) and object.
    pub fn kinetic_energy(&self, world: &WorldState) -> f64 {
        let arms: f64 = self
            .robots
            .iter()
            .zip(&world.robots)
            .map(|(m, s)| m.kinetic_energy(&s.q, &s.dq))
            .sum();
        let t = world.object.twist;
        arms + 0.5 * self.object.mass * (t.vx * t.vx + t.vy * t.vy) + 0.5 * self.object.inertia * t.omega * t.omega
    }

    /// Saturates commanded torques at the model bounds.
    pub fn saturate(&self, torques: &[DVector<f64>]) -> Vec<DVector<f64>> {
        torques
            .iter()
            .zip(&self.robots)
            .map(|(t, m)| {
                DVector::from_iterator(
                    t.len(),
                    t.iter().enumerate().map(|(k, x)| x.clamp(m.tau_min[k], m.tau_max[k])),
                )
            })
            .collect()
    }

    /// Advances the world by `dt` with semi-implicit Euler; contacts are
    /// resolved at velocity level with zero restitution and Coulomb friction.
    pub fn step(&self, world: &WorldState, torques: &[DVector<f64>], dt: f64) -> Result<WorldState, SimError> {
        if !(dt > 0.0) {
            return Err(SimError::InvalidTimeStep(dt));
        }
        if torques.len() != self.robots.len() {
            return Err(SimError::TorqueShape {
                expected: self.robots.len(),
                got: torques.len(),
            });
        }
        let layout = self.layout();
        let torques = self.saturate(torques);
        let chols = self.inertia_factors(world)?;
        let gravity = self.arm_gravity();

        // unconstrained velocities
        let mut u_free = self.stack_velocities(world, &layout);
        for (i, (m, s)) in self.robots.iter().zip(&world.robots).enumerate() {
            let h = m.bias_forces(&s.q, &s.dq, &gravity);
            let ddq = chols[i].solve(&(&torques[i] - h));
            let n = m.n_links();
            let mut seg = u_free.rows_mut(layout.offsets[i], n);
            seg += ddq * dt;
        }

        let contacts = self.detect_contacts(world, &world.active_contacts);
        let beta = self.params.stabilization;
        let mut rows = self.contact_rows(world, &contacts, &layout, |c| {
            if c.gap >= 0.0 {
                -c.gap / dt
            } else {
                -beta * c.gap / dt
            }
        });
        let n_contact_rows = rows.len();

        // object-ground friction at the centre
        let normal_load = self.object.mass * self.params.gravity;
        let limit = self.object.surface_friction_mu * normal_load * dt;
        if limit > 0.0 {
            let base = rows.len();
            let [hx, hy] = self.object.half_extents;
            for (axis, kind) in [
                (0, RowKind::GroundLinear { partner: base + 1, limit }),
                (1, RowKind::GroundLinear { partner: base, limit }),
                (
                    2,
                    RowKind::GroundTorsion {
                        limit: limit * self.params.torsion_radius_factor * 0.5 * (hx + hy),
                    },
                ),
            ] {
                let mut jac = DVector::zeros(layout.dim);
                jac[layout.object + axis] = 1.0;
                rows.push(Row { jac, target: 0.0, kind });
            }
        }

        let mut warm: Vec<f64> = contacts.iter().map(|c| c.normal_impulse).collect();
        warm.extend(contacts.iter().map(|c| c.tangent_impulse));
        if limit > 0.0 {
            warm.extend_from_slice(&world.ground_impulse);
        }

        let mut next = world.clone();
        let mut u = u_free.clone();
        let mut impulses = vec![0.0; rows.len()];
        if !rows.is_empty() {
            let minv_jt: Vec<DVector<f64>> = rows
                .iter()
                .map(|r| self.apply_inverse_mass(&chols, &r.jac, &layout))
                .collect();
            let out = projected_gauss_seidel(
                &rows,
                &minv_jt,
                &u_free,
                &warm,
                self.params.max_iterations,
                self.params.tolerance,
            );
            if !out.converged {
                return Err(SimError::SolverDiverged {
                    iterations: out.iterations,
                    time: world.time,
                });
            }
            for (l, w) in out.impulses.iter().zip(&minv_jt) {
                u += w * *l;
            }
            impulses = out.impulses;
        }
        self.unstack_velocities(&mut next, &u, &layout);

        for s in next.robots.iter_mut() {
            let dq = s.dq.clone();
            s.q += dq * dt;
        }
        let t = next.object.twist;
        let p = &mut next.object.pose;
        p.x += t.vx * dt;
        p.y += t.vy * dt;
        p.theta = wrap_angle(p.theta + t.omega * dt);
        next.time = world.time + dt;

        let nc = contacts.len();
        let mut solved = contacts.clone();
        for (k, c) in solved.iter_mut().enumerate() {
            c.normal_impulse = impulses[k];
            c.tangent_impulse = impulses[nc + k];
        }
        next.ground_impulse = if limit > 0.0 {
            [
                impulses[n_contact_rows],
                impulses[n_contact_rows + 1],
                impulses[n_contact_rows + 2],
            ]
        } else {
            [0.0; 3]
        };
        next.active_contacts = self.detect_contacts(&next, &solved);
        Ok(next)
    }

    /// Instantaneous perfectly inelastic impact over all closed contacts.
    /// Finite forces (ground friction, torques) do not contribute.
    pub fn resolve_impact(&self, world: &WorldState) -> Result<WorldState, SimError> {
        let layout = self.layout();
        let contacts = self.detect_contacts(world, &[]);
        if !contacts.iter().any(|c| c.normal_rel_velocity < 0.0) {
            return Ok(world.clone());
        }
        let rows = self.contact_rows(world, &contacts, &layout, |_| 0.0);
        let minv_jt = self.inverse_mass_products(world, &rows, &layout)?;
        let u0 = self.stack_velocities(world, &layout);
        let out = projected_gauss_seidel(
            &rows,
            &minv_jt,
            &u0,
            &[],
            self.params.max_iterations,
            self.params.tolerance,
        );
        if !out.converged {
            return Err(SimError::SolverDiverged {
                iterations: out.iterations,
                time: world.time,
            });
        }
        let mut u = u0;
        for (l, w) in out.impulses.iter().zip(&minv_jt) {
            u += w * *l;
        }
        let mut next = world.clone();
        self.unstack_velocities(&mut next, &u, &layout);
        next.active_contacts = self.detect_contacts(&next, &[]);
        Ok(next)
    }

    /// Impact-map sampling primitive: inelastic impact from the given ante
    /// state against an object at rest, followed by one
    /// [`IMPACT_MAP_STEP`] under pure gravity compensation. Returns the
    /// object twist.
    pub fn simulate_impact_event(
        &self,
        q: &[DVector<f64>],
        dq: &[DVector<f64>],
        object_pose: Pose2,
    ) -> Result<Twist2, SimError> {
        let robots = q
            .iter()
            .zip(dq)
            .map(|(q, dq)| RobotState {
                q: q.clone(),
                dq: dq.clone(),
            })
            .collect();
        let world = self.world_at(robots, object_pose);
        let after = self.resolve_impact(&world)?;
        let gravity = self.arm_gravity();
        let torques: Vec<DVector<f64>> = self
            .robots
            .iter()
            .zip(&after.robots)
            .map(|(m, s)| m.gravity_torque(&s.q, &gravity))
            .collect();
        let stepped = self.step(&after, &torques, IMPACT_MAP_STEP)?;
        Ok(stepped.object.twist)
    }
}

