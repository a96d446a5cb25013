//! Forward-model curiosity: every module architecture and intrinsic-reward
//! variant, plus reward mixing.
//!
//! Module inputs use a fixed layout. Agent `n`'s individual input is
//! `o^n ++ onehot(u^n)`. The masked joint view is `[o^m for m != n] ++
//! [onehot(u^m) for m != n]` and the joint input is `[o^0 .. o^{N-1}] ++
//! [onehot(u^0) .. onehot(u^{N-1})]`, always in ascending agent order.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};

use crate::env::{Action, Observation, WorldConfig, N_ACTIONS};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_network_lines, write_network, Lines};
use crate::nn::{AdamConfig, Arch, Gradients, Network, OptimizerState};
use crate::rng::{stream, SeedStreams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CuriosityKind {
    None,
    IcmIndiv,
    IcmJoint,
    IcmMin,
    Mcm,
    McmIndiv,
    McmJoint,
    McmSep,
}

impl CuriosityKind {
    /// Baselines first, then the ablations, then the proposed method.
    pub const ALL: [CuriosityKind; 8] = [
        CuriosityKind::None,
        CuriosityKind::IcmIndiv,
        CuriosityKind::IcmJoint,
        CuriosityKind::IcmMin,
        CuriosityKind::McmIndiv,
        CuriosityKind::McmJoint,
        CuriosityKind::McmSep,
        CuriosityKind::Mcm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CuriosityKind::None => "none",
            CuriosityKind::IcmIndiv => "icm_indiv",
            CuriosityKind::IcmJoint => "icm_joint",
            CuriosityKind::IcmMin => "icm_min",
            CuriosityKind::Mcm => "mcm",
            CuriosityKind::McmIndiv => "mcm_indiv",
            CuriosityKind::McmJoint => "mcm_joint",
            CuriosityKind::McmSep => "mcm_sep",
        }
    }

    /// Row label used in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            CuriosityKind::None => "COMA",
            CuriosityKind::IcmIndiv => "COMA+ICM-Indiv",
            CuriosityKind::IcmJoint => "COMA+ICM-Joint",
            CuriosityKind::IcmMin => "COMA+ICM-Min",
            CuriosityKind::Mcm => "COMA+MCM",
            CuriosityKind::McmIndiv => "COMA+MCM-Indiv",
            CuriosityKind::McmJoint => "COMA+MCM-Joint",
            CuriosityKind::McmSep => "COMA+MCM-Sep",
        }
    }

    pub fn is_two_headed(self) -> bool {
        matches!(
            self,
            CuriosityKind::Mcm | CuriosityKind::McmIndiv | CuriosityKind::McmJoint
        )
    }

    pub fn module_count(self, n_agents: usize) -> usize {
        match self {
            CuriosityKind::None => 0,
            CuriosityKind::IcmJoint => 1,
            CuriosityKind::McmSep => n_agents + 1,
            _ => n_agents,
        }
    }
}

impl fmt::Display for CuriosityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CuriosityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CuriosityKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = CuriosityKind::ALL.iter().map(|k| k.name()).collect();
            Error::config(
                "method",
                format!("unknown method `{s}`, expected one of {}", names.join(", ")),
            )
        })
    }
}

/// One environment step as seen by the curiosity modules.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub joint_obs: Vec<Observation>,
    pub joint_action: Vec<Action>,
    pub extrinsic_reward: f64,
    pub next_joint_obs: Vec<Observation>,
    pub done: bool,
}

/// Per-agent intrinsic rewards, all non-negative.
pub type IntrinsicRewards = Vec<f64>;

fn push_one_hot(out: &mut Vec<f64>, a: Action) {
    out.extend_from_slice(&a.one_hot());
}

impl Transition {
    pub fn n_agents(&self) -> usize {
        self.joint_obs.len()
    }

    fn check(&self, n_agents: usize, obs_dim: usize) -> Result<()> {
        let ok = self.joint_obs.len() == n_agents
            && self.joint_action.len() == n_agents
            && self.next_joint_obs.len() == n_agents
            && self
                .joint_obs
                .iter()
                .chain(&self.next_joint_obs)
                .all(|o| o.len() == obs_dim);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "transition does not match {n_agents} agents with observation length {obs_dim}"
            )))
        }
    }

    /// `o^n ++ onehot(u^n)`.
    pub fn individual_input(&self, n: usize) -> Vec<f64> {
        let mut v = self.joint_obs[n].clone();
        push_one_hot(&mut v, self.joint_action[n]);
        v
    }

    /// `o^{-n} ++ u^{-n}` with agent `n`'s slot removed.
    pub fn others_input(&self, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for (m, o) in self.joint_obs.iter().enumerate() {
            if m != n {
                v.extend_from_slice(o);
            }
        }
        for (m, &a) in self.joint_action.iter().enumerate() {
            if m != n {
                push_one_hot(&mut v, a);
            }
        }
        v
    }

    /// `o ++ u` over all agents.
    pub fn joint_input(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.joint_obs.concat();
        for &a in &self.joint_action {
            push_one_hot(&mut v, a);
        }
        v
    }

    pub fn next_joint(&self) -> Vec<f64> {
        self.next_joint_obs.concat()
    }
}

fn rows(batch: &[Transition], width: usize, f: impl Fn(&Transition) -> Vec<f64>) -> Array2<f64> {
    let mut data = Vec::with_capacity(batch.len() * width);
    for t in batch {
        data.extend(f(t));
    }
    Array2::from_shape_vec((batch.len(), width), data).expect("row widths checked per transition")
}

fn row_sq_err(pred: &Array2<f64>, target: &Array2<f64>) -> Array1<f64> {
    (pred - target).mapv(|d| d * d).sum_axis(ndarray::Axis(1))
}

/// Head-1 and head-2 predictions of a two-headed module for agent `n`.
pub fn mcm_forward(
    module: &Network,
    o_n: &[f64],
    u_n: Action,
    o_others: &[Observation],
    u_others: &[Action],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if module.spec().n_heads() != 2 {
        return Err(Error::Shape(format!(
            "expected a two-headed module, got {} heads",
            module.spec().n_heads()
        )));
    }
    if o_others.len() != u_others.len() {
        return Err(Error::Shape(format!(
            "{} other observations but {} other actions",
            o_others.len(),
            u_others.len()
        )));
    }
    let mut x = o_n.to_vec();
    push_one_hot(&mut x, u_n);
    let mut extra: Vec<f64> = o_others.concat();
    for &a in u_others {
        push_one_hot(&mut extra, a);
    }
    let mut out = module.predict_one(&x, &[&[], &extra])?;
    let joint = out.pop().expect("two heads");
    let indiv = out.pop().expect("two heads");
    Ok((indiv, joint))
}

/// Which input layout and target a module is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Individual(usize),
    Joint,
    Mixed(usize),
}

/// The forward models of one curiosity variant together with their optimizers.
#[derive(Debug, Clone)]
pub struct CuriosityBank {
    kind: CuriosityKind,
    n_agents: usize,
    obs_dim: usize,
    modules: Vec<Network>,
    optimizers: Vec<OptimizerState>,
}

impl CuriosityBank {
    /// Fresh modules for `kind`, module `m` initialised from its own seed stream.
    pub fn new(
        kind: CuriosityKind,
        world: &WorldConfig,
        arch: &Arch,
        adam: AdamConfig,
        streams: &SeedStreams,
    ) -> Result<Self> {
        world.validate()?;
        let (n, d) = (world.n_agents, world.obs_dim());
        let mut modules = Vec::with_capacity(kind.module_count(n));
        for (m, role) in Self::roles(kind, n).into_iter().enumerate() {
            let spec = Self::module_spec(role, n, d, arch);
            let mut rng = streams.stream(stream::CURIOSITY_BASE + m as u64);
            modules.push(Network::init(spec, &mut rng)?);
        }
        Self::from_modules(kind, n, d, modules, adam)
    }

    /// Wraps existing modules, checking that their layout matches `kind`.
    pub fn from_modules(
        kind: CuriosityKind,
        n_agents: usize,
        obs_dim: usize,
        modules: Vec<Network>,
        adam: AdamConfig,
    ) -> Result<Self> {
        let optimizers = modules.iter().map(|m| OptimizerState::new(m, adam)).collect();
        let bank = Self {
            kind,
            n_agents,
            obs_dim,
            modules,
            optimizers,
        };
        bank.check_layout()?;
        Ok(bank)
    }

    fn roles(kind: CuriosityKind, n: usize) -> Vec<Role> {
        match kind {
            CuriosityKind::None => vec![],
            CuriosityKind::IcmIndiv | CuriosityKind::IcmMin => (0..n).map(Role::Individual).collect(),
            CuriosityKind::IcmJoint => vec![Role::Joint],
            CuriosityKind::Mcm | CuriosityKind::McmIndiv | CuriosityKind::McmJoint => (0..n).map(Role::Mixed).collect(),
            CuriosityKind::McmSep => (0..n).map(Role::Individual).chain([Role::Joint]).collect(),
        }
    }

    fn module_spec(role: Role, n: usize, d: usize, arch: &Arch) -> crate::nn::NetworkSpec {
        let unit = d + N_ACTIONS;
        match role {
            Role::Individual(_) => arch.single(unit, d),
            Role::Joint => arch.single(n * unit, n * d),
            Role::Mixed(_) => arch.multi(unit, &[d, n * d], &[0, (n - 1) * unit]),
        }
    }

    fn check_layout(&self) -> Result<()> {
        let roles = Self::roles(self.kind, self.n_agents);
        if roles.len() != self.modules.len() {
            return Err(Error::Invariant(format!(
                "{} bank needs {} modules, has {}",
                self.kind,
                roles.len(),
                self.modules.len()
            )));
        }
        let (n, d) = (self.n_agents, self.obs_dim);
        for (m, (role, module)) in roles.iter().zip(&self.modules).enumerate() {
            let want = Self::module_spec(*role, n, d, &Arch::default());
            let got = module.spec();
            if got.input_dim != want.input_dim
                || got.output_dims != want.output_dims
                || got.head_extra_input_dims != want.head_extra_input_dims
            {
                return Err(Error::Invariant(format!(
                    "{} bank module {m} has layout in={} out={:?} extra={:?}, expected in={} out={:?} extra={:?}",
                    self.kind,
                    got.input_dim,
                    got.output_dims,
                    got.head_extra_input_dims,
                    want.input_dim,
                    want.output_dims,
                    want.head_extra_input_dims
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> CuriosityKind {
        self.kind
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn modules(&self) -> &[Network] {
        &self.modules
    }

    /// Direct module access, e.g. to set parameters by hand.
    pub fn modules_mut(&mut self) -> &mut [Network] {
        &mut self.modules
    }

    pub fn optimizers(&self) -> &[OptimizerState] {
        &self.optimizers
    }

    /// The same modules read under another kind with an identical layout,
    /// e.g. an `mcm` bank evaluated as `mcm_indiv`.
    pub fn reinterpret(&self, kind: CuriosityKind) -> Result<Self> {
        let mut other = self.clone();
        other.kind = kind;
        other.check_layout()?;
        Ok(other)
    }

    fn check_batch(&self, batch: &[Transition]) -> Result<()> {
        batch.iter().try_for_each(|t| t.check(self.n_agents, self.obs_dim))
    }

    fn unit(&self) -> usize {
        self.obs_dim + N_ACTIONS
    }

    fn individual_rows(&self, batch: &[Transition], n: usize) -> Array2<f64> {
        rows(batch, self.unit(), |t| t.individual_input(n))
    }

    fn others_rows(&self, batch: &[Transition], n: usize) -> Array2<f64> {
        rows(batch, (self.n_agents - 1) * self.unit(), |t| t.others_input(n))
    }

    fn joint_rows(&self, batch: &[Transition]) -> Array2<f64> {
        rows(batch, self.n_agents * self.unit(), |t| t.joint_input())
    }

    fn next_rows(&self, batch: &[Transition], n: usize) -> Array2<f64> {
        rows(batch, self.obs_dim, |t| t.next_joint_obs[n].clone())
    }

    fn next_joint_rows(&self, batch: &[Transition]) -> Array2<f64> {
        rows(batch, self.n_agents * self.obs_dim, |t| t.next_joint())
    }

    /// Per-transition squared errors of a one-headed module on agent `n`'s data.
    fn individual_errors(&self, module: &Network, batch: &[Transition], n: usize) -> Result<Array1<f64>> {
        let pred = module.predict(self.individual_rows(batch, n).view(), &[])?;
        Ok(row_sq_err(&pred[0], &self.next_rows(batch, n)))
    }

    fn joint_errors(&self, module: &Network, batch: &[Transition]) -> Result<Array1<f64>> {
        let pred = module.predict(self.joint_rows(batch).view(), &[])?;
        Ok(row_sq_err(&pred[0], &self.next_joint_rows(batch)))
    }

    /// Individual and joint errors of agent `n`'s two-headed module.
    fn mixed_errors(&self, batch: &[Transition], n: usize) -> Result<(Array1<f64>, Array1<f64>)> {
        let x = self.individual_rows(batch, n);
        let others = self.others_rows(batch, n);
        let empty = Array2::<f64>::zeros((batch.len(), 0));
        let pred = self.modules[n].predict(x.view(), &[empty.view(), others.view()])?;
        Ok((
            row_sq_err(&pred[0], &self.next_rows(batch, n)),
            row_sq_err(&pred[1], &self.next_joint_rows(batch)),
        ))
    }

    /// Intrinsic rewards for one transition.
    pub fn intrinsic_rewards(&self, t: &Transition) -> Result<IntrinsicRewards> {
        Ok(self.intrinsic_rewards_batch(std::slice::from_ref(t))?.remove(0))
    }

    /// Intrinsic rewards for every transition of `batch`, indexed `[transition][agent]`.
    pub fn intrinsic_rewards_batch(&self, batch: &[Transition]) -> Result<Vec<IntrinsicRewards>> {
        self.check_layout()?;
        self.check_batch(batch)?;
        let (b, n_agents) = (batch.len(), self.n_agents);
        let mut out = Array2::<f64>::zeros((b, n_agents));
        match self.kind {
            CuriosityKind::None => {}
            CuriosityKind::IcmIndiv => {
                for n in 0..n_agents {
                    out.column_mut(n)
                        .assign(&self.individual_errors(&self.modules[n], batch, n)?);
                }
            }
            CuriosityKind::IcmJoint => {
                let e = self.joint_errors(&self.modules[0], batch)?;
                for n in 0..n_agents {
                    out.column_mut(n).assign(&e);
                }
            }
            CuriosityKind::IcmMin => {
                for n in 0..n_agents {
                    let mut best = Array1::from_elem(b, f64::INFINITY);
                    for module in &self.modules {
                        let e = self.individual_errors(module, batch, n)?;
                        best.zip_mut_with(&e, |x, &y| *x = x.min(y));
                    }
                    out.column_mut(n).assign(&best);
                }
            }
            CuriosityKind::Mcm | CuriosityKind::McmIndiv | CuriosityKind::McmJoint => {
                for n in 0..n_agents {
                    let (indiv, joint) = self.mixed_errors(batch, n)?;
                    let r = match self.kind {
                        CuriosityKind::Mcm => indiv + joint,
                        CuriosityKind::McmIndiv => indiv,
                        _ => joint,
                    };
                    out.column_mut(n).assign(&r);
                }
            }
            CuriosityKind::McmSep => {
                let joint = self.joint_errors(&self.modules[n_agents], batch)?;
                for n in 0..n_agents {
                    let indiv = self.individual_errors(&self.modules[n], batch, n)?;
                    out.column_mut(n).assign(&(indiv + &joint));
                }
            }
        }
        Ok(out.outer_iter().map(|r| r.to_vec()).collect())
    }

    /// Batch-mean loss of every module and its gradients, without updating.
    ///
    /// One-headed modules use the plain squared error, two-headed modules half
    /// the sum of their individual and joint squared errors.
    pub fn losses_and_gradients(&self, batch: &[Transition]) -> Result<Vec<(f64, Gradients)>> {
        if batch.is_empty() {
            return Err(Error::Argument("curiosity update needs a non-empty batch".into()));
        }
        self.check_layout()?;
        self.check_batch(batch)?;
        let b = batch.len() as f64;
        let roles = Self::roles(self.kind, self.n_agents);
        roles
            .iter()
            .zip(&self.modules)
            .map(|(&role, module)| {
                let one_headed = |x: Array2<f64>, target: Array2<f64>| -> Result<(f64, Gradients)> {
                    let (pred, cache) = module.forward(x.view(), &[])?;
                    let diff = &pred[0] - &target;
                    let loss = diff.iter().map(|d| d * d).sum::<f64>() / b;
                    let g = diff * (2.0 / b);
                    Ok((loss, module.backward(&cache, &[g.view()])?))
                };
                match role {
                    Role::Individual(n) => one_headed(self.individual_rows(batch, n), self.next_rows(batch, n)),
                    Role::Joint => one_headed(self.joint_rows(batch), self.next_joint_rows(batch)),
                    Role::Mixed(n) => {
                        let x = self.individual_rows(batch, n);
                        let others = self.others_rows(batch, n);
                        let empty = Array2::<f64>::zeros((batch.len(), 0));
                        let (pred, cache) = module.forward(x.view(), &[empty.view(), others.view()])?;
                        let d1 = &pred[0] - &self.next_rows(batch, n);
                        let d2 = &pred[1] - &self.next_joint_rows(batch);
                        let sq = |d: &Array2<f64>| d.iter().map(|v| v * v).sum::<f64>();
                        let loss = 0.5 * (sq(&d1) + sq(&d2)) / b;
                        let g1 = d1 / b;
                        let g2 = d2 / b;
                        let views: [ArrayView2<f64>; 2] = [g1.view(), g2.view()];
                        Ok((loss, module.backward(&cache, &views)?))
                    }
                }
            })
            .collect()
    }

    /// One Adam step per module on the batch-mean loss. Returns the pre-update
    /// mean loss of each module (empty for `none`).
    pub fn update(&mut self, batch: &[Transition]) -> Result<Vec<f64>> {
        let grads = self.losses_and_gradients(batch)?;
        let mut losses = Vec::with_capacity(grads.len());
        for ((loss, g), (module, opt)) in grads.into_iter().zip(self.modules.iter_mut().zip(&mut self.optimizers)) {
            opt.step(module, &g)?;
            losses.push(loss);
        }
        Ok(losses)
    }

    pub fn write_checkpoint(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{BANK_HEADER}")?;
        writeln!(out, "kind {}", self.kind)?;
        writeln!(out, "n_agents {}", self.n_agents)?;
        writeln!(out, "obs_dim {}", self.obs_dim)?;
        writeln!(out, "modules {}", self.modules.len())?;
        for m in &self.modules {
            write_network(m, out)?;
        }
        Ok(())
    }

    /// Reads a bank written by [`CuriosityBank::write_checkpoint`]. Optimizer
    /// state starts fresh with `adam`.
    pub fn read_checkpoint(input: &mut impl BufRead, adam: AdamConfig) -> Result<Self> {
        let mut lines = Lines::new(input);
        let header = lines.next_line()?;
        if header != BANK_HEADER {
            return Err(lines.err(format!("unsupported header `{header}`")));
        }
        let l = lines.next_line()?;
        let kind: CuriosityKind = lines.field(&l, "kind")?.parse().map_err(|e| lines.err(e))?;
        let mut count = |key: &str| -> Result<usize> {
            let l = lines.next_line()?;
            let v = lines.field(&l, key)?;
            v.parse().map_err(|e| lines.err(format!("{key}: {e}")))
        };
        let n_agents = count("n_agents")?;
        let obs_dim = count("obs_dim")?;
        let n_modules = count("modules")?;
        let modules = (0..n_modules)
            .map(|_| read_network_lines(&mut lines))
            .collect::<Result<Vec<_>>>()?;
        Self::from_modules(kind, n_agents, obs_dim, modules, adam).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub const BANK_HEADER: &str = "mcm-bank v1";

/// `r^n = e + lambda * min(i^n, clip_max)`.
pub fn mix_rewards(e: f64, intrinsic: &[f64], lambda: f64, clip_max: f64) -> Vec<f64> {
    intrinsic.iter().map(|&i| mix_one(e, i, lambda, clip_max)).collect()
}

#[inline]
pub fn mix_one(e: f64, i: f64, lambda: f64, clip_max: f64) -> f64 {
    e + lambda * i.min(clip_max)
}
