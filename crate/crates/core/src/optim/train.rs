use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamState, TrainConfig};
use crate::cluster_metrics::{self, ClusterResult, MetricsReport};
use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::linalg::{Matrix, Tape, Var};
use crate::losses::{self, Gates, LossParts, LossReport, LossWeights};
use crate::model::{self, ModelParams, ParamVars};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Init,
    Train,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Init => "init",
            Phase::Train => "train",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Loss values of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub report: LossReport,
}

impl EpochRecord {
    pub const TSV_HEADER: &'static str = "phase\tepoch\tl_n\tl_f\tl_r\tl_rec\tl_kl\ttotal";

    pub fn to_tsv(&self) -> String {
        let r = &self.report;
        let f = crate::data_io::format_f64;
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.phase,
            self.epoch,
            f(r.l_n),
            f(r.l_f),
            f(r.l_r),
            f(r.l_rec),
            f(r.l_kl),
            f(r.total)
        )
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn diverged(phase: Phase, epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } | Error::Divergence { .. } => Error::Divergence {
            phase: phase.name(),
            epoch,
            detail: e.to_string(),
        },
        other => other,
    }
}

fn gradients(tape: &Tape, loss: Var, vars: &ParamVars) -> Result<Vec<Matrix>> {
    let grads = tape.backward(loss)?;
    Ok(vars.all().iter().map(|&v| grads.wrt(v)).collect())
}

fn check_params(p: &ModelParams, phase: Phase, epoch: usize) -> Result<()> {
    for (name, m) in p.named() {
        if !m.is_finite() {
            return Err(Error::Divergence {
                phase: phase.name(),
                epoch,
                detail: format!("parameter {name} became non-finite"),
            });
        }
    }
    Ok(())
}

// Reconstruction loss of the plain autoencoder on (x, adj).
fn reconstruction(
    tape: &mut Tape,
    vars: &ParamVars,
    x: &Matrix,
    adj: &Matrix,
    a_rw: &Matrix,
) -> Result<(Var, Var)> {
    let xv = tape.constant(x.clone());
    let av = tape.constant(adj.clone());
    let rw = tape.constant(a_rw.clone());
    let z = model::encode(tape, xv, av, vars)?;
    let x_hat = model::decode_attributes(tape, z, av, vars)?;
    let a_hat = model::decode_structure(tape, z)?;
    let l = losses::loss_rec(tape, xv, x_hat, rw, a_hat)?;
    Ok((l, z))
}

/// Fits the autoencoder on the undistorted graph by reconstruction only.
pub fn pretrain(g: &Graph, cfg: &TrainConfig) -> Result<(ModelParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed, 0);
    let mut params = ModelParams::init(&cfg.model, &mut rng)?;
    let adj = g.normalized_adjacency();
    let a_rw = g.normalize_rw();
    let mut adam = AdamState::new(&params, cfg.lr);
    let mut log = Vec::with_capacity(cfg.pretrain_epochs);
    for epoch in 0..cfg.pretrain_epochs {
        let on_err = diverged(Phase::Pretrain, epoch);
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let (loss, _) = reconstruction(&mut tape, &vars, g.attributes(), &adj, &a_rw).map_err(&on_err)?;
        let l_rec = tape.scalar(loss);
        let grads = gradients(&tape, loss, &vars).map_err(&on_err)?;
        adam_step(&mut params, &grads, &mut adam).map_err(&on_err)?;
        check_params(&params, Phase::Pretrain, epoch)?;
        log.push(EpochRecord {
            phase: Phase::Pretrain,
            epoch,
            report: LossReport {
                l_rec,
                total: l_rec,
                ..Default::default()
            },
        });
    }
    Ok((params, log))
}

/// K-means centroids of `z`, one row per cluster.
pub fn init_centers(z: &Matrix, c: usize, seed: u64) -> Result<Matrix> {
    if c > z.rows() {
        return Err(Error::Contract(format!(
            "cannot initialize {c} centers from {} embeddings",
            z.rows()
        )));
    }
    Ok(cluster_metrics::kmeans(z, c, seed)?.centers)
}

/// Joint training state after pretraining and center initialization.
#[derive(Debug)]
pub struct Trainer<'g> {
    graph: &'g Graph,
    cfg: TrainConfig,
    params: ModelParams,
    adam: AdamState,
    noise_rng: ChaCha8Rng,
    frozen_noise: Option<Matrix>,
    sym_adj: Matrix,
    rw_adj: Matrix,
    masked_adj: Matrix,
    diffusion: Matrix,
    /// Fixed centers for the readout when its width differs from the cluster count.
    readout_anchors: Option<Matrix>,
    log: Vec<EpochRecord>,
}

impl<'g> Trainer<'g> {
    /// Builds both views from the pretrained embedding of `params`.
    pub fn new(graph: &'g Graph, cfg: &TrainConfig, params: ModelParams) -> Result<Self> {
        cfg.validate()?;
        let sym_adj = graph.normalized_adjacency();
        let latent = params.embed(graph.attributes(), &sym_adj)?;
        let masked_adj = graph::mask_edges(graph, &latent, &cfg.distortion)?;
        let diffusion = graph::ppr_diffusion(graph, &cfg.distortion)?;
        let readout_anchors = if cfg.model.readout_k != cfg.model.n_clusters {
            Some(init_centers(&latent, cfg.model.readout_k, cfg.seed ^ 0x5eed)?)
        } else {
            None
        };
        let mut noise_rng = seeded(cfg.seed, 1 + cfg.distortion.seed);
        let frozen_noise = cfg
            .freeze_noise
            .then(|| graph::corrupt_features(graph.attributes(), &cfg.distortion, &mut noise_rng));
        Ok(Self {
            graph,
            adam: AdamState::new(&params, cfg.lr),
            cfg: cfg.clone(),
            params,
            noise_rng,
            frozen_noise,
            sym_adj,
            rw_adj: graph.normalize_rw(),
            masked_adj,
            diffusion,
            readout_anchors,
            log: Vec::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_parts(self) -> (ModelParams, Vec<EpochRecord>) {
        (self.params, self.log)
    }

    pub fn log(&self) -> &[EpochRecord] {
        &self.log
    }

    pub fn masked_adjacency(&self) -> &Matrix {
        &self.masked_adj
    }

    pub fn diffusion(&self) -> &Matrix {
        &self.diffusion
    }

    /// Draws the corrupted attributes for the next epoch.
    pub fn next_features(&mut self) -> Matrix {
        match &self.frozen_noise {
            Some(x) => x.clone(),
            None => graph::corrupt_features(
                self.graph.attributes(),
                &self.cfg.distortion,
                &mut self.noise_rng,
            ),
        }
    }

    /// Inputs of the full objective for the given corrupted attributes.
    pub fn inputs(&self, features: Matrix) -> ObjectiveInputs {
        ObjectiveInputs {
            attributes: self.graph.attributes().clone(),
            features,
            masked_adjacency: self.masked_adj.clone(),
            diffusion: self.diffusion.clone(),
            sym_adjacency: self.sym_adj.clone(),
            rw_adjacency: self.rw_adj.clone(),
            readout_anchors: self.readout_anchors.clone(),
        }
    }

    /// Records one full forward pass on `features` and returns the gated total.
    pub fn forward(
        &self,
        tape: &mut Tape,
        features: &Matrix,
        gates: Gates,
    ) -> Result<(Var, LossReport, ParamVars)> {
        let vars = self.params.register(tape);
        let inputs = self.inputs(features.clone());
        let out = objective(tape, &vars, &inputs, None, &self.cfg.weights, gates)?;
        Ok((out.total, out.report, vars))
    }

    /// One optimizer step under `gates`.
    pub fn step(&mut self, phase: Phase, epoch: usize, gates: Gates) -> Result<LossReport> {
        let on_err = diverged(phase, epoch);
        let features = self.next_features();
        let mut tape = Tape::new();
        let (total, report, vars) = self.forward(&mut tape, &features, gates).map_err(&on_err)?;
        let grads = gradients(&tape, total, &vars).map_err(&on_err)?;
        adam_step(&mut self.params, &grads, &mut self.adam).map_err(&on_err)?;
        check_params(&self.params, phase, epoch)?;
        self.log.push(EpochRecord {
            phase,
            epoch,
            report,
        });
        Ok(report)
    }

    /// Reconstruction plus KL only, to settle the centers.
    pub fn run_init_phase(&mut self) -> Result<()> {
        for epoch in 0..self.cfg.init_epochs {
            self.step(Phase::Init, epoch, Gates::NONE)?;
        }
        Ok(())
    }

    /// The full objective with the configured ablation gates.
    pub fn run_train_phase(&mut self) -> Result<()> {
        let gates = self.cfg.ablation.gates();
        for epoch in 0..self.cfg.train_epochs {
            self.step(Phase::Train, epoch, gates)?;
        }
        Ok(())
    }

    /// Fused embedding of the uncorrupted attributes under both views.
    pub fn embedding(&self) -> Result<Matrix> {
        let x = self.graph.attributes();
        let z1 = self.params.embed(x, &self.masked_adj)?;
        let z2 = self.params.embed(x, &self.diffusion)?;
        let z = z1.add(&z2)?.scale(0.5);
        Ok(if self.cfg.normalize_embedding {
            model::normalize_rows(&z)
        } else {
            z
        })
    }
}

/// Everything the full objective reads besides the parameters.
#[derive(Debug, Clone)]
pub struct ObjectiveInputs {
    /// Clean attributes, the reconstruction target.
    pub attributes: Matrix,
    /// Corrupted attributes shared by both views.
    pub features: Matrix,
    pub masked_adjacency: Matrix,
    pub diffusion: Matrix,
    /// Symmetric normalization used by the attribute decoder.
    pub sym_adjacency: Matrix,
    /// Random-walk normalization used for propagation and as structure target.
    pub rw_adjacency: Matrix,
    pub readout_anchors: Option<Matrix>,
}

/// Result of [`objective`].
#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    pub total: Var,
    pub report: LossReport,
    /// Fused embedding node.
    pub fused: Var,
    /// Target distribution used by the KL term.
    pub target: Matrix,
}

/// Records the complete training objective on `tape`.
///
/// When `target` is `None` the target distribution is derived from the
/// current soft assignment; either way it enters the loss as a constant.
pub fn objective(
    tape: &mut Tape,
    vars: &ParamVars,
    inputs: &ObjectiveInputs,
    target: Option<&Matrix>,
    weights: &LossWeights,
    gates: Gates,
) -> Result<ObjectiveOutput> {
    let x_tilde = tape.constant(inputs.features.clone());
    let am = tape.constant(inputs.masked_adjacency.clone());
    let ad = tape.constant(inputs.diffusion.clone());
    let sym = tape.constant(inputs.sym_adjacency.clone());
    let rw = tape.constant(inputs.rw_adjacency.clone());
    let x = tape.constant(inputs.attributes.clone());

    let z1 = model::encode(tape, x_tilde, am, vars)?;
    let z2 = model::encode(tape, x_tilde, ad, vars)?;
    let z = model::fuse(tape, z1, z2)?;

    let q = model::soft_assign(tape, z, vars.centers)?;
    let target = match target {
        Some(p) => p.clone(),
        None => model::target_dist(tape.value(q)),
    };
    let q_readout = match &inputs.readout_anchors {
        Some(anchors) => {
            let anchors = tape.constant(anchors.clone());
            model::soft_assign(tape, z, anchors)?
        }
        None => q,
    };
    let zt1 = model::readout(tape, z1, q_readout)?;
    let zt2 = model::readout(tape, z2, q_readout)?;

    let l_n = losses::loss_scr(tape, z1, z2)?;
    let l_f = losses::loss_fcr(tape, zt1, zt2)?;
    let l_r = losses::loss_preg(tape, z, rw)?;
    let x_hat = model::decode_attributes(tape, z, sym, vars)?;
    let a_hat = model::decode_structure(tape, z)?;
    let l_rec = losses::loss_rec(tape, x, x_hat, rw, a_hat)?;
    let l_kl = losses::loss_kl(tape, &target, q)?;

    let parts = LossParts {
        l_n,
        l_f,
        l_r,
        l_rec,
        l_kl,
    };
    let (total, report) = losses::total_loss(tape, &parts, weights, gates)?;
    Ok(ObjectiveOutput {
        total,
        report,
        fused: z,
        target,
    })
}

/// Runs the full-objective phase from already initialized `params`.
pub fn train(g: &Graph, cfg: &TrainConfig, params: ModelParams) -> Result<(ModelParams, Vec<EpochRecord>)> {
    let mut trainer = Trainer::new(g, cfg, params)?;
    trainer.run_train_phase()?;
    Ok(trainer.into_parts())
}

/// Everything produced by one seeded end-to-end run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    pub embedding: Matrix,
    pub clustering: ClusterResult,
    pub metrics: Option<MetricsReport>,
}

/// Pretrain, initialize centers, train, then cluster the fused embedding.
pub fn run(g: &Graph, cfg: &TrainConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let c = cfg.model.n_clusters;
    if cfg.model.input_dim != g.feature_dim() {
        return Err(Error::Contract(format!(
            "model input_dim {} does not match feature_dim {}",
            cfg.model.input_dim,
            g.feature_dim()
        )));
    }
    let (mut params, mut log) = pretrain(g, cfg)?;
    let z0 = params.embed(g.attributes(), &g.normalized_adjacency())?;
    params.centers = init_centers(&z0, c, cfg.seed)?;

    let mut trainer = Trainer::new(g, cfg, params)?;
    trainer.run_init_phase()?;
    trainer.run_train_phase()?;
    let embedding = trainer.embedding()?;
    let (params, train_log) = trainer.into_parts();
    log.extend(train_log);

    let clustering = cluster_metrics::kmeans_restarts(&embedding, c, cfg.seed, cfg.kmeans_restarts)?;
    let metrics = match g.labels() {
        Some(truth) => Some(cluster_metrics::metrics(&clustering.assignments, truth)?),
        None => None,
    };
    Ok(RunOutput {
        params,
        log,
        embedding,
        clustering,
        metrics,
    })
}
