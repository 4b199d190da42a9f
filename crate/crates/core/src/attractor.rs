//! Predicted connection graph, its numerical verification, and the y-map
//! diagnostic of a trajectory.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientSpec;
use crate::equilibria::{
    self, find_equilibria_with, sturm_permutation, EquilibriumRecord, EquilibriumSearch,
    EquilibriumSummary, SturmPermutation, Target,
};
use crate::error::{Error, Result};
use crate::field::{self, SpatialGrid};
use crate::infinity::{self, dominant_mode, growup_direction, infinity_equilibria, GrowupDirection, InfinityEquilibrium};
use crate::integrator::{self, integrate, Outcome, StepController, TrajectoryRecord};

/// Modes inspected when reading the direction of an escaping trajectory.
const EXIT_MODES: usize = 16;
/// A converged run counts as reaching a bounded equilibrium within this
/// sup-distance, relative to `1 + ||e||_inf`.
pub const CAPTURE_TOL: f64 = 1e-5;

/// A node of the connection graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeRef {
    Bounded { id: usize },
    Infinity { j: usize, sign: i32 },
}

impl NodeRef {
    /// DOT identifier: `e{id}`, `+Phi{j}`, `-Phi{j}`.
    pub fn key(&self) -> String {
        match *self {
            NodeRef::Bounded { id } => format!("e{id}"),
            NodeRef::Infinity { j, sign } => InfinityEquilibrium { j, sign }.label(),
        }
    }

    pub fn from_infinity(e: InfinityEquilibrium) -> Self {
        NodeRef::Infinity { j: e.j, sign: e.sign }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, NodeRef::Bounded { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node: NodeRef,
    pub label: String,
    pub eta: Option<f64>,
    pub u_pi: Option<f64>,
    pub morse: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Hb,
    Hup,
    Hinf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeStatus {
    Predicted,
    VerifiedNumerically,
    Refuted,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeRef,
    pub target: NodeRef,
    pub kind: EdgeKind,
    pub status: EdgeStatus,
}

impl Edge {
    pub fn name(&self) -> String {
        format!("{} -> {}", self.source.key(), self.target.key())
    }
}

/// Nodes are bounded and infinity equilibria; edges are typed connections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConnectionGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl ConnectionGraph {
    pub fn edges_of(&self, kind: EdgeKind) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    pub fn has_edge(&self, source: NodeRef, target: NodeRef) -> bool {
        self.edges.iter().any(|e| e.source == source && e.target == target)
    }

    /// Kahn's algorithm; `None` when the edges contain a cycle.
    pub fn topological_order(&self) -> Option<Vec<NodeRef>> {
        let index: HashMap<NodeRef, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.node, i)).collect();
        let mut indeg = vec![0usize; self.nodes.len()];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let (s, t) = (index[&e.source], index[&e.target]);
            out[s].push(t);
            indeg[t] += 1;
        }
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop() {
            order.push(self.nodes[i].node);
            for &t in &out[i] {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    ready.push(t);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Structural invariants: known endpoints, no self-edges, kinds matching
    /// endpoint types, acyclicity.
    pub fn validate(&self) -> Result<()> {
        let known: BTreeSet<NodeRef> = self.nodes.iter().map(|n| n.node).collect();
        for e in &self.edges {
            if !known.contains(&e.source) || !known.contains(&e.target) {
                return Err(Error::InvalidArgument(format!("edge {} has an unknown endpoint", e.name())));
            }
            if e.source == e.target {
                return Err(Error::InvalidArgument(format!("self-edge at {}", e.source.key())));
            }
            let ok = match e.kind {
                EdgeKind::Hb => e.source.is_bounded() && e.target.is_bounded(),
                EdgeKind::Hup => e.source.is_bounded() && !e.target.is_bounded(),
                EdgeKind::Hinf => !e.source.is_bounded() && !e.target.is_bounded(),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("edge {} does not fit kind {:?}", e.name(), e.kind)));
            }
        }
        if self.topological_order().is_none() {
            return Err(Error::InvalidArgument("connection graph has a cycle".into()));
        }
        Ok(())
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph attractor {\n  rankdir=TB;\n");
        for n in &self.nodes {
            let shape = if n.node.is_bounded() { "ellipse" } else { "doublecircle" };
            let _ = writeln!(s, "  \"{}\" [label=\"{}\", shape={}];", n.node.key(), n.label, shape);
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::Hb => "solid",
                EdgeKind::Hup => "dashed",
                EdgeKind::Hinf => "dotted",
            };
            let color = match e.status {
                EdgeStatus::VerifiedNumerically => "darkgreen",
                EdgeStatus::Predicted => "gray40",
                EdgeStatus::Refuted => "red",
                EdgeStatus::Undetermined => "orange",
            };
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [style={}, color={}, label=\"{:?}\"];",
                e.source.key(),
                e.target.key(),
                style,
                color,
                e.kind
            );
        }
        s.push_str("}\n");
        s
    }
}

fn bounded_node(e: &EquilibriumRecord) -> Node {
    Node {
        node: NodeRef::Bounded { id: e.id },
        label: format!("e{}(i={})", e.id, e.morse_index),
        eta: Some(e.eta),
        u_pi: Some(e.right_value),
        morse: Some(e.morse_index),
    }
}

fn infinity_node(e: InfinityEquilibrium) -> Node {
    Node {
        node: NodeRef::from_infinity(e),
        label: e.label(),
        eta: None,
        u_pi: None,
        morse: None,
    }
}

fn require_hyperbolic(bounded: &[EquilibriumRecord]) -> Result<()> {
    match bounded.iter().find(|e| !e.hyperbolic) {
        Some(e) => Err(Error::NonHyperbolic {
            id: e.id,
            eigenvalue: e.critical_eigenvalue(),
            tol: e.hyperbolicity_tol,
        }),
        None => Ok(()),
    }
}

/// Graph predicted by the connection rules: `Hb` for adjacent pairs with a
/// Morse-index drop, `Hup` for equilibria adjacent to `+-Phi_k`, `Hinf` from
/// `+-Phi_j` to both `+-Phi_k` whenever `j > k`.
pub fn predicted_graph(bounded: &[EquilibriumRecord], infinity: &[InfinityEquilibrium]) -> Result<ConnectionGraph> {
    require_hyperbolic(bounded)?;
    let mut g = ConnectionGraph {
        nodes: bounded.iter().map(bounded_node).chain(infinity.iter().copied().map(infinity_node)).collect(),
        edges: Vec::new(),
    };
    for a in bounded {
        for b in bounded {
            if a.id != b.id && a.morse_index > b.morse_index && equilibria::adjacent(a, Target::Bounded(b), bounded)? {
                g.edges.push(Edge {
                    source: NodeRef::Bounded { id: a.id },
                    target: NodeRef::Bounded { id: b.id },
                    kind: EdgeKind::Hb,
                    status: EdgeStatus::Predicted,
                });
            }
        }
    }
    for a in bounded {
        for phi in infinity {
            if equilibria::adjacent(a, Target::Infinity { j: phi.j, sign: phi.sign }, bounded)? {
                g.edges.push(Edge {
                    source: NodeRef::Bounded { id: a.id },
                    target: NodeRef::from_infinity(*phi),
                    kind: EdgeKind::Hup,
                    status: EdgeStatus::Predicted,
                });
            }
        }
    }
    for p in infinity {
        for q in infinity {
            if p.j > q.j {
                g.edges.push(Edge {
                    source: NodeRef::from_infinity(*p),
                    target: NodeRef::from_infinity(*q),
                    kind: EdgeKind::Hinf,
                    status: EdgeStatus::Predicted,
                });
            }
        }
    }
    g.validate()?;
    Ok(g)
}

// ----------------------------------------------------------- verification

/// Everything a verification run needs.
#[derive(Debug, Clone)]
pub struct VerificationContext<'a> {
    pub coeff: &'a CoefficientSpec,
    pub bounded: &'a [EquilibriumRecord],
    pub ctrl: &'a StepController,
    /// Base amplitude; the sweep uses `eps * 2^m`, `m < scales`.
    pub eps: f64,
    pub scales: usize,
}

/// Where one verification run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub eps: f64,
    pub reached: Option<NodeRef>,
    pub outcome: Outcome,
    /// Normalized projection on the limit mode for runs ending at infinity.
    pub projection: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub source: NodeRef,
    pub target: NodeRef,
    pub status: EdgeStatus,
    /// Equilibria that block the pair.
    pub blockers: Vec<usize>,
    pub runs: Vec<SeedRun>,
    pub note: Option<String>,
}

fn record<'a>(ctx: &VerificationContext<'a>, id: usize) -> Result<&'a EquilibriumRecord> {
    ctx.bounded
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown equilibrium e{id}")))
}

/// Unstable-eigenfunction index and sign that seed a connection toward
/// `target`: `k = z(target - source)`, signed by `(target - source)(0)`.
fn seed_direction(source: &EquilibriumRecord, target: NodeRef, ctx: &VerificationContext<'_>) -> Result<(usize, f64)> {
    match target {
        NodeRef::Infinity { j, sign } => Ok((j, f64::from(sign))),
        NodeRef::Bounded { id } => {
            let t = record(ctx, id)?;
            let diff = t.profile.sub(&source.profile)?;
            let k = field::zero_number_default(&diff).max(0) as usize;
            Ok((k, if t.eta > source.eta { 1.0 } else { -1.0 }))
        }
    }
}

/// Classifies the end state of a run.
fn classify(tr: &TrajectoryRecord, ctx: &VerificationContext<'_>) -> (Option<NodeRef>, Option<f64>) {
    match tr.outcome {
        Outcome::Converged { .. } => {
            let u = tr.last();
            let hit = ctx.bounded.iter().find(|e| {
                u.sub(&e.profile).is_ok_and(|d| d.sup_norm() <= CAPTURE_TOL * (1.0 + e.profile.sup_norm()))
            });
            (hit.map(|e| NodeRef::Bounded { id: e.id }), None)
        }
        Outcome::GrowUp { .. } => match growup_direction(tr) {
            Ok(GrowupDirection::Determined { j, sign, projection }) => (Some(NodeRef::Infinity { j, sign }), Some(projection)),
            Ok(GrowupDirection::Undetermined { projection, .. }) => (None, Some(projection)),
            Err(_) => (None, None),
        },
        Outcome::LeftBall { .. } => {
            let (j, sign, p) = dominant_mode(tr.last(), EXIT_MODES);
            (Some(NodeRef::Infinity { j, sign }), Some(p))
        }
        Outcome::TimeLimit { .. } => (None, None),
    }
}

fn blockers_of(source: &EquilibriumRecord, target: NodeRef, ctx: &VerificationContext<'_>) -> Result<Vec<usize>> {
    match target {
        NodeRef::Bounded { id } => equilibria::blockers(source, Target::Bounded(record(ctx, id)?), ctx.bounded),
        NodeRef::Infinity { j, sign } => equilibria::blockers(source, Target::Infinity { j, sign }, ctx.bounded),
    }
}

/// Simulates from the source along the seeding unstable direction over
/// `ctx.scales` amplitudes. Verified when some run reaches the target;
/// Refuted only when every run is captured by a blocking equilibrium;
/// Undetermined otherwise.
pub fn verify_connection(source: NodeRef, target: NodeRef, ctx: &VerificationContext<'_>) -> Result<Verification> {
    let NodeRef::Bounded { id } = source else {
        return Err(Error::InvalidArgument(
            "simulation-based verification needs a bounded source".into(),
        ));
    };
    let src = record(ctx, id)?;
    let blockers = blockers_of(src, target, ctx)?;
    let (k, sign) = seed_direction(src, target, ctx)?;
    let mut out = Verification {
        source,
        target,
        status: EdgeStatus::Undetermined,
        blockers,
        runs: Vec::new(),
        note: None,
    };
    if k >= src.morse_index || k >= src.eigenfunctions.len() {
        out.note = Some(format!(
            "seed direction {k} is not unstable at {} (Morse index {})",
            source.key(),
            src.morse_index
        ));
        return Ok(out);
    }
    let psi = &src.eigenfunctions[k];
    let runs: Vec<Result<SeedRun>> = (0..ctx.scales)
        .into_par_iter()
        .map(|m| {
            let eps = ctx.eps * 2f64.powi(m as i32);
            let mut u0 = src.profile.clone();
            u0.axpy(sign * eps, psi);
            let tr = integrate(&u0, ctx.ctrl, ctx.coeff, None)?;
            let (reached, projection) = classify(&tr, ctx);
            Ok(SeedRun {
                eps,
                reached,
                outcome: tr.outcome,
                projection,
            })
        })
        .collect();
    out.runs = runs.into_iter().collect::<Result<_>>()?;
    let captured = |r: &SeedRun| {
        matches!(r.reached, Some(NodeRef::Bounded { id }) if out.blockers.contains(&id))
    };
    out.status = if out.runs.iter().any(|r| r.reached == Some(target)) {
        EdgeStatus::VerifiedNumerically
    } else if !out.runs.is_empty() && out.runs.iter().all(captured) {
        EdgeStatus::Refuted
    } else {
        EdgeStatus::Undetermined
    };
    Ok(out)
}

/// Status of an edge: simulation for bounded sources, plane-flow rates for
/// `Hinf` (expansion of `xi_k` at `Phi_j`, contraction of `xi_j` at `Phi_k`).
pub fn verify_edge(edge: &Edge, ctx: &VerificationContext<'_>) -> Result<Verification> {
    match (edge.kind, edge.source, edge.target) {
        (EdgeKind::Hinf, NodeRef::Infinity { j, .. }, NodeRef::Infinity { j: k, .. }) => {
            let a = ctx.coeff.a_inf;
            let expand = infinity::plane_flow_rates(j, a, &[k])[0].1;
            let contract = infinity::plane_flow_rates(k, a, &[j])[0].1;
            Ok(Verification {
                source: edge.source,
                target: edge.target,
                status: if expand > 0.0 && contract < 0.0 {
                    EdgeStatus::VerifiedNumerically
                } else {
                    EdgeStatus::Refuted
                },
                blockers: Vec::new(),
                runs: Vec::new(),
                note: Some(format!("rate of xi_{k} at Phi_{j}: {expand}; rate of xi_{j} at Phi_{k}: {contract}")),
            })
        }
        _ => verify_connection(edge.source, edge.target, ctx),
    }
}

// ------------------------------------------------------------------ y-map

/// Dropping times, their compactification and the `y` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YMapResult {
    pub n: usize,
    /// `t_k`, infinite when the zero number never falls to `k`.
    pub dropping_times: Vec<f64>,
    pub tau: Vec<f64>,
    pub signs: Vec<i32>,
    pub coords: Vec<f64>,
    /// First sample with `u == reference` up to tolerance (`z = -1`).
    pub vanish_time: Option<f64>,
}

impl YMapResult {
    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|y| y * y).sum()
    }

    /// `z(t) = min {k : t >= t_k}`, `-1` from the vanishing time on.
    pub fn zero_number_at(&self, t: f64) -> i64 {
        if self.vanish_time.is_some_and(|tv| t >= tv) {
            return -1;
        }
        (0..=self.n)
            .find(|&k| t >= self.dropping_times[k])
            .map_or(self.n as i64 + 1, |k| k as i64)
    }
}

/// y-map of a trajectory relative to an equilibrium with zero budget `n`.
pub fn ymap(tr: &TrajectoryRecord, reference: &EquilibriumRecord, n: usize) -> Result<YMapResult> {
    if tr.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let e = &reference.profile;
    let zs: Vec<i64> = tr
        .snapshots
        .iter()
        .map(|u| integrator::difference_zeros(u, e))
        .collect::<Result<_>>()?;
    if zs[0] > n as i64 {
        return Err(Error::InvalidArgument(format!(
            "z(u(0) - e) = {} exceeds the budget n = {n}",
            zs[0]
        )));
    }
    let dropping_times: Vec<f64> = (0..=n)
        .map(|k| {
            zs.iter()
                .position(|&z| z <= k as i64)
                .map_or(f64::INFINITY, |i| tr.times[i])
        })
        .collect();
    let vanish_time = zs.iter().position(|&z| z < 0).map(|i| tr.times[i]);
    let tau: Vec<f64> = dropping_times.iter().map(|t| t.tanh()).collect();
    let mut signs = Vec::with_capacity(n + 1);
    let mut coords = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let upper = if k == 0 { 1.0 } else { tau[k - 1] };
        let gap = upper - tau[k];
        if gap <= 0.0 {
            signs.push(1);
            coords.push(0.0);
            continue;
        }
        let t_lo = dropping_times[k];
        let t_hi = if k == 0 { f64::INFINITY } else { dropping_times[k - 1] };
        let t_star = (0.5 * (tau[k] + upper)).atanh();
        let s = boundary_sign(tr, e, t_star, t_lo, t_hi)?;
        signs.push(s);
        coords.push(f64::from(s) * gap.sqrt());
    }
    Ok(YMapResult {
        n,
        dropping_times,
        tau,
        signs,
        coords,
        vanish_time,
    })
}

/// Sign of `(u - e)(t, 0)` at the sample nearest below `t_star`, moving to
/// neighbouring samples inside `[t_lo, t_hi)` when the value is within
/// tolerance of zero.
fn boundary_sign(tr: &TrajectoryRecord, e: &field::StateField, t_star: f64, t_lo: f64, t_hi: f64) -> Result<i32> {
    let start = tr.index_at(t_star);
    let inside = |i: usize| tr.times[i] >= t_lo && tr.times[i] < t_hi;
    let forward = start..tr.len();
    let backward = (0..start).rev();
    for i in forward.chain(backward) {
        if !inside(i) {
            continue;
        }
        let u = &tr.snapshots[i];
        let diff = u.sub(e)?;
        let tol = integrator::difference_tolerance(u, e, &diff);
        let v = diff.values()[0];
        if v.abs() > tol {
            return Ok(if v > 0.0 { 1 } else { -1 });
        }
    }
    Err(Error::NonGeneric(format!(
        "boundary difference vanishes on every sample of [{t_lo}, {t_hi})"
    )))
}

// ------------------------------------------------------------- assembly

/// Input of [`assemble_attractor`].
#[derive(Debug, Clone)]
pub struct Scenario {
    pub coeff: CoefficientSpec,
    pub search: EquilibriumSearch,
    pub ctrl: StepController,
    pub eps: f64,
    pub scales: usize,
    /// Also simulate toward non-adjacent targets (blocking checks).
    pub check_blocking: bool,
}

impl Scenario {
    /// Covering equilibrium search, default controller, 8 scales from 1e-6.
    /// Cut-off scenarios stop runs that leave the `R`-ball.
    pub fn new(coeff: CoefficientSpec) -> Self {
        let search = EquilibriumSearch::covering(&coeff);
        let ctrl = StepController {
            escape_radius: coeff.cutoff_radius,
            track_modes: 16,
            ..StepController::default()
        };
        Self {
            coeff,
            search,
            ctrl,
            eps: 1e-6,
            scales: 8,
            check_blocking: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedConnection {
    pub source: NodeRef,
    pub reached: NodeRef,
    pub eps: f64,
}

/// Structured result of [`assemble_attractor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorReport {
    pub scenario: String,
    pub b: f64,
    pub a_inf: f64,
    pub n_infinity: usize,
    pub equilibria: Vec<EquilibriumSummary>,
    pub infinity: Vec<InfinityEquilibrium>,
    pub graph: ConnectionGraph,
    pub sturm_permutation: SturmPermutation,
    pub verifications: Vec<Verification>,
    /// Simulations toward non-adjacent targets.
    pub blocking_checks: Vec<Verification>,
    pub observed: Vec<ObservedConnection>,
    pub discrepancies: Vec<String>,
    pub notes: Vec<String>,
}

/// Bounded equilibria of a scenario. For cut-off specs only those inside the
/// `R`-ball are kept; the outer pair created by the cut-off stands in for
/// infinity.
pub fn scenario_equilibria(s: &Scenario) -> Result<Vec<EquilibriumRecord>> {
    let mut eqs = find_equilibria_with(&s.search, &s.coeff)?;
    if let Some(r) = s.coeff.cutoff_radius {
        eqs.retain(|e| {
            let grad = e.profile.derivative().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            e.profile.sup_norm().max(grad) <= r
        });
        for (id, e) in eqs.iter_mut().enumerate() {
            e.id = id;
        }
    }
    Ok(eqs)
}

pub fn assemble_attractor(s: &Scenario) -> Result<AttractorReport> {
    let bounded = scenario_equilibria(s)?;
    require_hyperbolic(&bounded)?;
    let infinity = infinity_equilibria(s.coeff.a_inf, s.coeff.b)?;
    let mut graph = predicted_graph(&bounded, &infinity)?;
    let sigma = sturm_permutation(&bounded)?;
    let ctx = VerificationContext {
        coeff: &s.coeff,
        bounded: &bounded,
        ctrl: &s.ctrl,
        eps: s.eps,
        scales: s.scales,
    };
    let verifications: Vec<Verification> = graph
        .edges
        .iter()
        .map(|e| verify_edge(e, &ctx))
        .collect::<Result<_>>()?;
    for (e, v) in graph.edges.iter_mut().zip(&verifications) {
        e.status = v.status;
    }

    let mut blocking_checks = Vec::new();
    if s.check_blocking {
        let targets: Vec<NodeRef> = graph.nodes.iter().map(|n| n.node).collect();
        for src in &bounded {
            if src.morse_index == 0 {
                continue;
            }
            let source = NodeRef::Bounded { id: src.id };
            for &t in &targets {
                if t == source || graph.has_edge(source, t) {
                    continue;
                }
                let adjacent = blockers_of(src, t, &ctx)?.is_empty();
                if !adjacent {
                    blocking_checks.push(verify_connection(source, t, &ctx)?);
                }
            }
        }
    }

    let mut observed = Vec::new();
    for v in verifications.iter().chain(&blocking_checks) {
        for r in &v.runs {
            if let Some(reached) = r.reached {
                observed.push(ObservedConnection {
                    source: v.source,
                    reached,
                    eps: r.eps,
                });
            }
        }
    }
    let mut discrepancies = Vec::new();
    for e in &graph.edges {
        if e.status != EdgeStatus::VerifiedNumerically {
            discrepancies.push(format!("predicted but not verified: {} ({:?}, {:?})", e.name(), e.kind, e.status));
        }
    }
    let mut seen = BTreeSet::new();
    for o in &observed {
        if o.reached != o.source && !graph.has_edge(o.source, o.reached) && seen.insert((o.source, o.reached)) {
            discrepancies.push(format!("observed but not predicted: {} -> {}", o.source.key(), o.reached.key()));
        }
    }
    let mut notes = Vec::new();
    if infinity.len() > 2 {
        notes.push(
            "Hinf edges are emitted for both target signs of every pair j > k; the connection rule fixes indices only, not sign pairs".into(),
        );
    }
    if s.coeff.cutoff_radius.is_some() {
        notes.push("cut-off scenario: runs leaving the R-ball are read as reaching infinity in the direction at exit".into());
    }
    Ok(AttractorReport {
        scenario: s.coeff.name.clone(),
        b: s.coeff.b,
        a_inf: s.coeff.a_inf,
        n_infinity: s.coeff.n_infinity(),
        equilibria: bounded.iter().map(EquilibriumRecord::summary).collect(),
        infinity,
        graph,
        sturm_permutation: sigma,
        verifications,
        blocking_checks,
        observed,
        discrepancies,
        notes,
    })
}

/// Convenience for callers holding only a grid size.
pub fn default_grid() -> SpatialGrid {
    SpatialGrid::default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::find_equilibria;

    fn linear_records(b: f64) -> Vec<EquilibriumRecord> {
        let c = CoefficientSpec::linear(b, 1.0).unwrap();
        find_equilibria(-1.0, 1.0, 100, &c).unwrap()
    }

    #[test]
    fn minimal_linear_graph() {
        let eqs = linear_records(0.5);
        let inf = infinity_equilibria(1.0, 0.5).unwrap();
        let g = predicted_graph(&eqs, &inf).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 2);
        assert!(g.edges.iter().all(|e| e.kind == EdgeKind::Hup));
        let dot = g.to_dot();
        assert!(dot.contains("\"e0\" [label=\"e0(i=1)\""));
        assert!(dot.contains("\"e0\" -> \"+Phi0\""));
        assert!(dot.contains("\"e0\" -> \"-Phi0\""));
    }

    #[test]
    fn linear_b5_cascade() {
        let eqs = linear_records(5.0);
        let inf = infinity_equilibria(1.0, 5.0).unwrap();
        let g = predicted_graph(&eqs, &inf).unwrap();
        assert_eq!(g.edges_of(EdgeKind::Hup).count(), 6);
        assert_eq!(g.edges_of(EdgeKind::Hinf).count(), 12);
        for (j, k) in [(2, 1), (2, 0), (1, 0)] {
            for s in [1, -1] {
                for t in [1, -1] {
                    assert!(g.has_edge(NodeRef::Infinity { j, sign: s }, NodeRef::Infinity { j: k, sign: t }));
                }
            }
        }
        assert!(g.topological_order().is_some());
    }

    #[test]
    fn non_hyperbolic_refused() {
        let c = CoefficientSpec::linear(4.0, 1.0).unwrap();
        let s = Scenario::new(c);
        match assemble_attractor(&s) {
            Err(Error::NonHyperbolic { eigenvalue, .. }) => assert!(eigenvalue.abs() < 1e-6),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn cycle_detected() {
        let a = NodeRef::Bounded { id: 0 };
        let b = NodeRef::Bounded { id: 1 };
        let node = |n: NodeRef| Node {
            node: n,
            label: n.key(),
            eta: None,
            u_pi: None,
            morse: None,
        };
        let edge = |s, t| Edge {
            source: s,
            target: t,
            kind: EdgeKind::Hb,
            status: EdgeStatus::Predicted,
        };
        let g = ConnectionGraph {
            nodes: vec![node(a), node(b)],
            edges: vec![edge(a, b), edge(b, a)],
        };
        assert!(g.validate().is_err());
        let g = ConnectionGraph {
            nodes: vec![node(a)],
            edges: vec![edge(a, a)],
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn ymap_along_phi0() {
        let c = CoefficientSpec::linear(0.5, 1.0).unwrap();
        let eqs = linear_records(0.5);
        let g = SpatialGrid::default();
        let u0 = field::EigenMode::new(g, 0).field().scaled(1e-3);
        let tr = integrate(&u0, &StepController::default(), &c, Some(&eqs[0].profile)).unwrap();
        let y = ymap(&tr, &eqs[0], 0).unwrap();
        assert_eq!(y.coords, vec![1.0]);
        assert_eq!(y.dropping_times, vec![0.0]);
    }

    #[test]
    fn ymap_simultaneous_drop_gives_zero() {
        let c = CoefficientSpec::linear(0.5, 1.0).unwrap();
        let eqs = linear_records(0.5);
        let g = SpatialGrid::default();
        // z(u0) = 2 with budget 3: t_3 = t_2 = 0
        let u0 = field::EigenMode::new(g, 2).field().clone();
        let tr = integrate(&u0, &StepController::default(), &c, Some(&eqs[0].profile)).unwrap();
        let y = ymap(&tr, &eqs[0], 3).unwrap();
        assert_eq!(y.coords[3], 0.0);
        assert!((y.norm_sq() - 1.0).abs() < 1e-12);
        for (i, t) in tr.times.iter().enumerate() {
            assert_eq!(y.zero_number_at(*t), tr.zero_history.as_ref().unwrap()[i]);
        }
    }
}
