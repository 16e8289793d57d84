//! Thread-pool versions of the embarrassingly parallel steps.

use rayon::prelude::*;
use topobetti_core::arrangement::BuildOptions;
use topobetti_core::constructions::BettiVector;
use topobetti_core::exact::BoxDomain;
use topobetti_core::homology::analyze_network;
use topobetti_core::network::ReluNetwork;
use topobetti_core::stability::TrialRunner;
use topobetti_core::verify::{check_grid_size, GridEvaluator, GridOptions, SignGrid};
use topobetti_core::Result;

/// Runs perturbation trials on the rayon pool; results stay in trial order.
#[derive(Clone, Copy, Debug, Default)]
pub struct Rayon;

impl TrialRunner for Rayon {
    fn run(&self, nets: &[ReluNetwork], domain: &BoxDomain, options: BuildOptions) -> Vec<Result<BettiVector>> {
        nets.par_iter().map(|n| analyze_network(n, domain, options).map(|r| r.betti)).collect()
    }
}

/// Same result as [`topobetti_core::verify::grid_sign_sample`], evaluated in parallel.
pub fn grid_sign_sample(net: &ReluNetwork, domain: &BoxDomain, resolution: u64, options: GridOptions) -> Result<SignGrid> {
    let eval = GridEvaluator::new(net, domain, resolution)?;
    check_grid_size(&eval, options)?;
    let signs = (0..eval.point_count() as usize).into_par_iter().map(|i| eval.sign_at_flat(i)).collect();
    SignGrid::new(resolution, eval.d(), signs)
}
