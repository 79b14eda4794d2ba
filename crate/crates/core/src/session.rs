//! One-time preparation and the per-frame adjust loop.
//!
//! A frame has three stages: solving control heights for the new parameters
//! (S), mapping a solution onto every visible point with detail (M), and
//! refreshing vertex normals (N). In pipelined mode `adjust` runs S for the
//! new parameters alongside M and N for the previous solution, so returned
//! geometry trails the parameters by one call while the reported span is
//! already current. `drain` maps the newest solution and closes the gap.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::base::BaseSurface;
use crate::cloud::{estimate_density, PointCloud, SamplingDensity};
use crate::compression::{compress_normals, ReliefParams};
use crate::curvature::{mean_curvature_field, normalize_curvature, CurvatureField, MlsConfig};
use crate::detail::enhance_details;
use crate::error::{ReliefError, Result};
use crate::mapping::{
    build_reference, fit_ratio_field, map_heights, ratio_domain, ReferenceRelief,
};
use crate::mba::DEFAULT_LEVELS;
use crate::mesh::{triangulate_xy, update_normals, MeshTopology, ReliefMesh};
use crate::sampling::{sample_controls, ControlSet, DEFAULT_TARGET};
use crate::solver::{
    assemble_system, height_span, solve_heights, Fnv, HeightSolution, LinearSystem,
};
use crate::target::{search_height, TargetOutcome, TargetProgress, TargetRequest};
use crate::viewprep::{
    align_view, detect_boundary, detect_visible, BoundaryInfo, ViewFrame, VisibleSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Requested control count, capped at the visible count.
    pub controls: usize,
    pub levels: usize,
    pub params: ReliefParams,
    /// Run the stages one after another with no lag.
    pub reference_mode: bool,
    pub prepare_timeout_ms: Option<u64>,
    /// Overrides the density-scaled curvature neighborhood.
    pub mls: Option<MlsConfig>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            controls: DEFAULT_TARGET,
            levels: DEFAULT_LEVELS,
            params: ReliefParams::default(),
            reference_mode: false,
            prepare_timeout_ms: None,
            mls: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub solve_ms: f64,
    pub map_ms: f64,
    pub normals_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareTimings {
    pub align_ms: f64,
    pub visible_ms: f64,
    pub boundary_ms: f64,
    pub curvature_ms: f64,
    pub sampling_ms: f64,
    pub assemble_ms: f64,
    pub reference_ms: f64,
    pub triangulate_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub seq: u64,
    /// Heights per visible point.
    pub z: Arc<Vec<f64>>,
    pub normals: Arc<Vec<Vector3<f64>>>,
    /// Control span of the newest solve.
    pub span: f64,
    /// Parameters of the newest solve.
    pub params: ReliefParams,
    /// Parameters the geometry was mapped from.
    pub mapped_params: ReliefParams,
    pub timings: StageTimings,
    /// Set when a stage failed; the geometry is then the last good one.
    pub error: Option<String>,
}

/// Everything computed once per view.
pub struct Prepared {
    pub view: ViewFrame,
    pub cloud: PointCloud,
    pub rho: SamplingDensity,
    pub visible: VisibleSet,
    pub boundary: BoundaryInfo,
    pub curvature: CurvatureField,
    pub controls: ControlSet,
    pub system: LinearSystem,
    pub topology: MeshTopology,
    pub domain: ([f64; 2], [f64; 2]),
    pub levels: usize,
    pub timings: PrepareTimings,
}

struct BaseState {
    reference: ReferenceRelief,
}

#[derive(Clone)]
struct Snapshot {
    params: ReliefParams,
    solution: Arc<HeightSolution>,
    base: Arc<BaseState>,
}

impl Prepared {
    fn solve_stage(&self, params: &ReliefParams, base: &BaseSurface) -> Result<HeightSolution> {
        let cn = compress_normals(&self.controls, params, self.rho.get());
        solve_heights(&self.system, &cn, base)
    }

    fn map_stage(&self, snap: &Snapshot) -> Vec<f64> {
        let reference = &snap.base.reference;
        let field = fit_ratio_field(
            &self.controls,
            &snap.solution,
            reference,
            self.domain,
            self.levels,
        );
        let z = map_heights(&self.visible.xy, reference, &field);
        let h = height_span(&z, &reference.z_base);
        enhance_details(&z, &self.curvature, snap.params.gamma, h)
    }

    fn normal_stage(&self, z: &[f64]) -> Vec<Vector3<f64>> {
        update_normals(&self.topology, &self.visible.xy, z)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, ms(t.elapsed()))
}

pub struct Session {
    prep: Arc<Prepared>,
    base: Arc<BaseState>,
    pending: Snapshot,
    last: FrameResult,
    seq: u64,
    reference_mode: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("visible", &self.prep.visible.len())
            .field("controls", &self.prep.controls.len())
            .field("seq", &self.seq)
            .finish()
    }
}

/// Runs every one-time stage and produces frame 0 at `config.params`.
pub fn prepare_session(
    cloud: &PointCloud,
    view: Vector3<f64>,
    config: &SessionConfig,
) -> Result<Session> {
    config.params.validate()?;
    let start = Instant::now();
    let deadline = config.prepare_timeout_ms.map(Duration::from_millis);
    let check = || match deadline {
        Some(d) if start.elapsed() > d => Err(ReliefError::PrepareTimeout),
        _ => Ok(()),
    };
    let mut t = PrepareTimings::default();

    let (aligned, ms_) = timed(|| align_view(cloud, view));
    let (aligned, frame) = aligned?;
    let rho = estimate_density(aligned.points())?;
    t.align_ms = ms_;
    check()?;
    let (visible, ms_) = timed(|| detect_visible(&aligned, rho));
    t.visible_ms = ms_;
    let (boundary, ms_) = timed(|| detect_boundary(&visible, rho));
    t.boundary_ms = ms_;
    check()?;
    let mls = config.mls.unwrap_or_else(|| MlsConfig::for_density(rho));
    let (raw, ms_) = timed(|| mean_curvature_field(&visible, &aligned, &mls));
    let curvature = normalize_curvature(raw?);
    t.curvature_ms = ms_;
    check()?;
    let target = config.controls.min(visible.len());
    let (controls, ms_) = timed(|| sample_controls(&visible, &boundary, &curvature, rho, target));
    let controls = controls?;
    t.sampling_ms = ms_;
    check()?;
    let (system, ms_) = timed(|| assemble_system(&controls));
    let system = system?;
    t.assemble_ms = ms_;
    check()?;
    let (reference, ms_) = timed(|| build_reference(&visible, &boundary, &config.params.base, rho));
    let reference = reference?;
    t.reference_ms = ms_;
    check()?;
    let (tris, ms_) = timed(|| triangulate_xy(&visible.xy, 4.0 * rho.get()));
    let topology = MeshTopology::new(visible.len(), tris?);
    t.triangulate_ms = ms_;
    check()?;
    t.total_ms = ms(start.elapsed());

    let prep = Arc::new(Prepared {
        view: frame,
        cloud: aligned,
        rho,
        domain: ratio_domain(&visible, rho),
        visible,
        boundary,
        curvature,
        controls,
        system,
        topology,
        levels: config.levels.max(1),
        timings: t,
    });
    let base = Arc::new(BaseState { reference });
    let (solution, solve_ms) = timed(|| prep.solve_stage(&config.params, &config.params.base));
    let pending = Snapshot {
        params: config.params.clone(),
        solution: Arc::new(solution?),
        base: base.clone(),
    };
    let (z, map_ms) = timed(|| prep.map_stage(&pending));
    let (normals, normals_ms) = timed(|| prep.normal_stage(&z));
    let last = FrameResult {
        seq: 0,
        z: Arc::new(z),
        normals: Arc::new(normals),
        span: pending.solution.span,
        params: pending.params.clone(),
        mapped_params: pending.params.clone(),
        timings: StageTimings {
            solve_ms,
            map_ms,
            normals_ms,
        },
        error: None,
    };
    Ok(Session {
        prep,
        base,
        pending,
        last,
        seq: 0,
        reference_mode: config.reference_mode,
    })
}

impl Session {
    pub fn prepared(&self) -> &Prepared {
        &self.prep
    }

    pub fn params(&self) -> &ReliefParams {
        &self.pending.params
    }

    pub fn last_frame(&self) -> &FrameResult {
        &self.last
    }

    pub fn reference_mode(&self) -> bool {
        self.reference_mode
    }

    pub fn set_reference_mode(&mut self, on: bool) {
        self.reference_mode = on;
    }

    pub fn point_count(&self) -> usize {
        self.prep.visible.len()
    }

    pub fn control_count(&self) -> usize {
        self.prep.controls.len()
    }

    pub fn xy(&self) -> &[[f64; 2]] {
        &self.prep.visible.xy
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.prep.topology.triangles
    }

    pub fn reference(&self) -> &ReferenceRelief {
        &self.base.reference
    }

    /// Current control solution (for the newest parameters).
    pub fn solution(&self) -> &HeightSolution {
        &self.pending.solution
    }

    /// Hash over the matrix, its factorization, the reference heights and
    /// the triangulation.
    pub fn prepared_fingerprint(&self) -> u64 {
        let mut h = Fnv(self.prep.system.fingerprint());
        h.word(self.base.reference.system().fingerprint());
        self.base
            .reference
            .z_ref
            .iter()
            .for_each(|v| h.word(v.to_bits()));
        h.word(self.prep.topology.fingerprint());
        h.0
    }

    fn base_for(&self, base: &BaseSurface) -> Result<Arc<BaseState>> {
        if *base == self.base.reference.base {
            Ok(self.base.clone())
        } else {
            Ok(Arc::new(BaseState {
                reference: self.base.reference.rebase(base)?,
            }))
        }
    }

    fn failed(&mut self, e: &ReliefError) -> FrameResult {
        let mut f = self.last.clone();
        f.error = Some(format!("{}: {e}", e.code()));
        f
    }

    /// Applies new parameters and returns the next frame.
    ///
    /// Invalid parameters are rejected; stage failures return the last good
    /// frame with `error` set.
    pub fn adjust(&mut self, params: &ReliefParams) -> Result<FrameResult> {
        params.validate()?;
        let base = match self.base_for(&params.base) {
            Ok(b) => b,
            Err(e) => return Ok(self.failed(&e)),
        };
        let prep = self.prep.clone();
        let prev = self.pending.clone();

        let (solved, geometry, timings) = if self.reference_mode {
            let (sol, solve_ms) = timed(|| prep.solve_stage(params, &base.reference.base));
            let sol = match sol {
                Ok(s) => Arc::new(s),
                Err(e) => return Ok(self.failed(&e)),
            };
            let snap = Snapshot {
                params: params.clone(),
                solution: sol,
                base: base.clone(),
            };
            let (z, map_ms) = timed(|| prep.map_stage(&snap));
            let (n, normals_ms) = timed(|| prep.normal_stage(&z));
            (
                snap,
                (z, n),
                StageTimings {
                    solve_ms,
                    map_ms,
                    normals_ms,
                },
            )
        } else {
            let ((sol, solve_ms), ((z, map_ms), (n, normals_ms))) = rayon::join(
                || timed(|| prep.solve_stage(params, &base.reference.base)),
                || {
                    let zm = timed(|| prep.map_stage(&prev));
                    let nn = timed(|| prep.normal_stage(&zm.0));
                    (zm, nn)
                },
            );
            let sol = match sol {
                Ok(s) => Arc::new(s),
                Err(e) => return Ok(self.failed(&e)),
            };
            (
                Snapshot {
                    params: params.clone(),
                    solution: sol,
                    base: base.clone(),
                },
                (z, n),
                StageTimings {
                    solve_ms,
                    map_ms,
                    normals_ms,
                },
            )
        };
        let mapped_params = if self.reference_mode {
            solved.params.clone()
        } else {
            prev.params.clone()
        };
        self.seq += 1;
        self.base = base;
        self.last = FrameResult {
            seq: self.seq,
            z: Arc::new(geometry.0),
            normals: Arc::new(geometry.1),
            span: solved.solution.span,
            params: solved.params.clone(),
            mapped_params,
            timings,
            error: None,
        };
        self.pending = solved;
        Ok(self.last.clone())
    }

    /// Maps the newest solution so geometry matches the current parameters.
    pub fn drain(&mut self) -> FrameResult {
        let (z, map_ms) = timed(|| self.prep.map_stage(&self.pending));
        let (n, normals_ms) = timed(|| self.prep.normal_stage(&z));
        self.seq += 1;
        self.last = FrameResult {
            seq: self.seq,
            z: Arc::new(z),
            normals: Arc::new(n),
            span: self.pending.solution.span,
            params: self.pending.params.clone(),
            mapped_params: self.pending.params.clone(),
            timings: StageTimings {
                solve_ms: 0.0,
                map_ms,
                normals_ms,
            },
            error: None,
        };
        self.last.clone()
    }

    /// Drains and materializes the relief in the aligned frame.
    pub fn export_mesh(&mut self) -> Result<ReliefMesh> {
        let frame = self.drain();
        Ok(self.mesh_of(&frame))
    }

    pub fn mesh_of(&self, frame: &FrameResult) -> ReliefMesh {
        let vertices = self
            .prep
            .visible
            .xy
            .iter()
            .zip(frame.z.iter())
            .map(|(p, &z)| Point3::new(p[0], p[1], z))
            .collect();
        ReliefMesh::new(
            vertices,
            self.prep.topology.triangles.clone(),
            frame.normals.to_vec(),
        )
    }

    /// Control span before detail for `(alpha, beta)` with the current base and gamma.
    pub fn control_span(&self, alpha: f64, beta: f64) -> Result<f64> {
        let params = ReliefParams {
            alpha,
            beta,
            ..self.pending.params.clone()
        };
        Ok(self
            .prep
            .solve_stage(&params, &self.pending.base.reference.base)?
            .span)
    }

    /// Searches `(alpha, beta)` for `req.h0` and adopts them. The next
    /// `drain` or `adjust` reflects the result.
    pub fn solve_for_height(
        &mut self,
        req: &TargetRequest,
        progress: impl FnMut(TargetProgress),
    ) -> Result<TargetOutcome> {
        let start = (self.pending.params.alpha, self.pending.params.beta);
        let gamma = self.pending.params.gamma;
        let outcome = search_height(req, gamma, start, |a, b| self.control_span(a, b), progress)?;
        let params = ReliefParams {
            alpha: outcome.alpha,
            beta: outcome.beta,
            ..self.pending.params.clone()
        };
        let solution = self
            .prep
            .solve_stage(&params, &self.pending.base.reference.base)?;
        self.pending = Snapshot {
            params,
            solution: Arc::new(solution),
            base: self.pending.base.clone(),
        };
        Ok(outcome)
    }
}

/// Free-function form of [`Session::solve_for_height`].
pub fn solve_for_height(
    session: &mut Session,
    req: &TargetRequest,
    progress: impl FnMut(TargetProgress),
) -> Result<TargetOutcome> {
    session.solve_for_height(req, progress)
}
