//! Combinatorial and topological stability, and a seeded perturbation harness.

use alloc::vec::Vec;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arrangement::{signed_complex_logged, BuildOptions};
use crate::constructions::BettiVector;
use crate::error::{Error, Result};
use crate::exact::{int, BoxDomain, Scalar};
use crate::homology::analyze_network;
use crate::network::{NeuronId, ReluNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationReason {
    /// The neuron's pullback is identically zero on a full-dimensional region.
    DegeneratePullback,
    /// The pullback hyperplane passes through a vertex of the region.
    VertexOnHyperplane,
}

impl ViolationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationReason::DegeneratePullback => "degenerate-pullback",
            ViolationReason::VertexOnHyperplane => "vertex-on-hyperplane",
        }
    }
}

/// A neuron whose pullback meets a region badly. `cell` indexes the
/// full-dimensional regions present just before that neuron was processed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Violation {
    pub neuron: NeuronId,
    pub cell: usize,
    pub reason: ViolationReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationStatus {
    /// Only the exact check was run.
    NotRun,
    /// The network is not topologically stable, so the harness declined to run.
    NotApplicable,
    /// Every trial at `certified_delta` reproduced the baseline Betti vector.
    Consistent,
    /// No tried radius reproduced the baseline in every trial.
    Inconsistent,
}

impl PerturbationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationStatus::NotRun => "not-run",
            PerturbationStatus::NotApplicable => "not-applicable",
            PerturbationStatus::Consistent => "consistent",
            PerturbationStatus::Inconsistent => "inconsistent",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilityReport {
    pub combinatorially_stable: bool,
    pub topologically_stable: bool,
    pub violations: Vec<Violation>,
    pub certified_delta: Option<Scalar>,
    pub trials: usize,
    pub seed: u64,
    pub status: PerturbationStatus,
    pub baseline: Option<BettiVector>,
    /// Betti vectors of the trials at the last radius tried.
    pub trial_betti: Vec<BettiVector>,
    /// Radii tried, largest first.
    pub tried: Vec<Scalar>,
}

/// Replays the construction and records every degenerate or vertex-touching pullback,
/// the output neuron included.
pub fn check_stability(net: &ReluNetwork, domain: &BoxDomain, options: BuildOptions) -> Result<StabilityReport> {
    let mut log = Vec::new();
    signed_complex_logged(net, domain, options, Some(&mut log))?;
    let output_layer = net.depth() + 1;
    let combinatorially_stable = log.iter().all(|v| v.neuron.layer == output_layer);
    Ok(StabilityReport {
        combinatorially_stable,
        topologically_stable: log.is_empty(),
        violations: log,
        certified_delta: None,
        trials: 0,
        seed: 0,
        status: PerturbationStatus::NotRun,
        baseline: None,
        trial_betti: Vec::new(),
        tried: Vec::new(),
    })
}

/// Resolution of the perturbation draws: each offset is `delta · k / 2^20` with `|k| ≤ 2^20`.
pub const PERTURBATION_STEPS: i64 = 1 << 20;

/// `net` with every weight and bias moved by an independent uniform offset in
/// `[-delta, delta]`. The stream depends only on `(seed, trial)`.
pub fn perturbed_network(net: &ReluNetwork, delta: &Scalar, seed: u64, trial: u64) -> Result<ReluNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let step = delta / int(PERTURBATION_STEPS);
    let params: Vec<Scalar> = net
        .parameters()
        .into_iter()
        .map(|p| {
            let k: i64 = rng.gen_range(-PERTURBATION_STEPS..=PERTURBATION_STEPS);
            p + &step * Scalar::from_integer(BigInt::from(k))
        })
        .collect();
    net.with_parameters(&params)
}

/// Runs the analyses of a batch of perturbed networks.
pub trait TrialRunner {
    fn run(&self, nets: &[ReluNetwork], domain: &BoxDomain, options: BuildOptions) -> Vec<Result<BettiVector>>;
}

/// Runs trials one after another.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl TrialRunner for Sequential {
    fn run(&self, nets: &[ReluNetwork], domain: &BoxDomain, options: BuildOptions) -> Vec<Result<BettiVector>> {
        nets.iter().map(|n| analyze_network(n, domain, options).map(|r| r.betti)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PerturbationConfig {
    /// How many times `delta` may be halved after the first failed round.
    pub max_halvings: u32,
    /// Run the trials even when the exact check finds violations.
    pub force: bool,
    pub options: BuildOptions,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { max_halvings: 8, force: false, options: BuildOptions::default() }
    }
}

/// Seeded perturbation trials, halving `delta` until every trial reproduces
/// the unperturbed Betti vector. A consistent result is evidence, not a proof.
pub fn perturbation_test(
    net: &ReluNetwork,
    domain: &BoxDomain,
    delta: &Scalar,
    trials: usize,
    seed: u64,
    config: PerturbationConfig,
    runner: &dyn TrialRunner,
) -> Result<StabilityReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    if delta.is_negative() {
        return Err(Error::InvalidArgument("delta must be nonnegative".into()));
    }
    let mut report = check_stability(net, domain, config.options)?;
    report.trials = trials;
    report.seed = seed;
    if !report.topologically_stable && !config.force {
        report.status = PerturbationStatus::NotApplicable;
        return Ok(report);
    }
    let baseline = analyze_network(net, domain, config.options)?.betti;
    let mut radius = delta.clone();
    report.status = PerturbationStatus::Inconsistent;
    for round in 0..=config.max_halvings {
        if round > 0 {
            if radius.is_zero() {
                break;
            }
            radius /= int(2);
        }
        let nets = (0..trials as u64).map(|t| perturbed_network(net, &radius, seed, t)).collect::<Result<Vec<_>>>()?;
        let results = runner.run(&nets, domain, config.options).into_iter().collect::<Result<Vec<_>>>()?;
        report.tried.push(radius.clone());
        let agree = results.iter().all(|b| *b == baseline);
        report.trial_betti = results;
        if agree {
            report.status = PerturbationStatus::Consistent;
            report.certified_delta = Some(radius);
            break;
        }
    }
    report.baseline = Some(baseline);
    Ok(report)
}
