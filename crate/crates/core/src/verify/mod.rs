//! Self-verification suites run by `dint verify` and the acceptance test.
//!
//! Every suite is deterministic given the seed. A corruption hook scales
//! one analytic gradient so the checks can be shown to fail.

mod layers;
mod netcheck;
pub mod oracles;
mod props;

use std::time::Instant;

pub use layers::{check_layers, LayerCheck, LAYER_NAMES, SHAPES_PER_LAYER, STEP};
pub use netcheck::{check_network_gradient, NetworkGradCheck, NetworkGradCheckOptions};

/// Largest relative error a finite-difference check may report.
pub const GRAD_TOLERANCE: f64 = 1e-4;

pub const SUITE_NAMES: [&str; 9] = [
    "layer-gradients",
    "network-gradient",
    "loss-algebra",
    "oracles",
    "data-synthesis",
    "shape-contract",
    "metric-invariants",
    "trainer-invariants",
    "topology",
];

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// `(target, factor)`: target is a layer name from [`LAYER_NAMES`] or a
    /// parameter name prefix such as `s2.conv3`.
    pub corrupt: Option<(String, f64)>,
    /// Restrict to these suites; empty means all.
    pub only: Vec<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 17,
            corrupt: None,
            only: Vec::new(),
        }
    }
}

fn layer_suite(opts: &VerifyOptions) -> props::Outcome {
    let corrupt = opts
        .corrupt
        .as_ref()
        .filter(|(t, _)| LAYER_NAMES.contains(&t.as_str()))
        .map(|(t, f)| (t.as_str(), *f));
    let checks = check_layers(opts.seed, corrupt)?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !(c.max_rel_error < GRAD_TOLERANCE))
        .map(|c| format!("{} rel error {:.3e} at {}", c.layer, c.max_rel_error, c.worst))
        .collect();
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(if failed.is_empty() {
        (true, format!("{} layers x {} shapes, max rel error {worst:.2e}", checks.len(), SHAPES_PER_LAYER))
    } else {
        (false, format!("failed: {}", failed.join("; ")))
    })
}

fn network_suite(opts: &VerifyOptions) -> props::Outcome {
    let corrupt = opts.corrupt.clone().filter(|(t, _)| !LAYER_NAMES.contains(&t.as_str()));
    let mut report = Vec::new();
    let mut passed = true;
    for hc in [false, true] {
        let mut o = NetworkGradCheckOptions {
            corrupt: corrupt.clone(),
            seed: opts.seed,
            ..NetworkGradCheckOptions::default()
        };
        o.net.use_hypercolumn = hc;
        let r = check_network_gradient(&o)?;
        let ok = r.max_rel_error < GRAD_TOLERANCE;
        passed &= ok;
        report.push(format!(
            "{}: {} coords, {} kinks skipped, max rel error {:.2e}{}",
            if hc { "hc" } else { "plain" },
            r.checked,
            r.skipped_kinks,
            r.max_rel_error,
            if ok { String::new() } else { format!(" at {}", r.worst) }
        ));
    }
    Ok((passed, report.join("; ")))
}

/// Runs one suite by name.
pub fn run_suite(name: &str, opts: &VerifyOptions) -> Option<SuiteResult> {
    let name = *SUITE_NAMES.iter().find(|n| **n == name)?;
    let start = Instant::now();
    let outcome = match name {
        "layer-gradients" => layer_suite(opts),
        "network-gradient" => network_suite(opts),
        "loss-algebra" => props::loss_algebra(opts.seed),
        "oracles" => props::oracles(opts.seed),
        "data-synthesis" => props::data_synthesis(opts.seed),
        "shape-contract" => props::shape_contract(opts.seed),
        "metric-invariants" => props::metric_invariants(opts.seed),
        "trainer-invariants" => props::trainer_invariants(opts.seed),
        _ => props::topology(opts.seed),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Some(SuiteResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs the selected suites in a fixed order.
pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteResult> {
    SUITE_NAMES
        .iter()
        .filter(|n| opts.only.is_empty() || opts.only.iter().any(|o| o == *n))
        .filter_map(|n| run_suite(n, opts))
        .collect()
}
