//! The executable property suite: the structural guarantees of the
//! conflict-free update, run over randomized trials with pinned
//! tolerances. Shared by the `properties` CLI subcommand and the
//! acceptance tests.

use crate::aggregators::{
    config_update, config_update_two, imtlg_update, pcgrad_update_ordered, DirectionWeights,
};
use crate::optimizers::sgd_step;
use crate::problems::{quadratic_suite, Problem};
use crate::vecmath::{cosine_similarity, unitize, GradientSet, Vector, EPS_DEFAULT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Result of one property check.
#[derive(Debug, Clone)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed violation (0 when the property held with margin).
    pub worst: f64,
    pub detail: String,
}

impl PropertyOutcome {
    fn new(name: &'static str, passed: bool, worst: f64, detail: String) -> Self {
        Self {
            name,
            passed,
            worst,
            detail,
        }
    }
}

/// Options for a property run. `sabotage` flips the sign of every
/// aggregated update before checking, as a negative control that the
/// suite actually detects a corrupted aggregator.
#[derive(Debug, Clone, Copy, Default)]
pub struct PropertyOptions {
    pub sabotage: bool,
}

fn normal_vector(rng: &mut ChaCha8Rng, k: usize) -> Vector {
    Vector::from_vec(
        (0..k)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn random_set(rng: &mut ChaCha8Rng) -> GradientSet {
    let m = rng.gen_range(2..=5);
    let k = rng.gen_range(8..=256);
    GradientSet::new((0..m).map(|_| normal_vector(rng, k)).collect()).expect("rows")
}

/// Conflict-freedom, equal projection rate, and the magnitude law over
/// one shared batch of random gradient sets.
fn core_trio(trials: usize, opts: PropertyOptions) -> [PropertyOutcome; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(20240901);
    let mut worst_conflict = f64::NEG_INFINITY; // most negative normalized dot
    let mut worst_spread = 0.0f64;
    let mut worst_mag = 0.0f64;
    for _ in 0..trials {
        let grads = random_set(&mut rng);
        let m = grads.num_losses();
        let mut r = config_update(&grads, &DirectionWeights::uniform(m), EPS_DEFAULT)
            .expect("config update");
        if opts.sabotage {
            r.update = r.update.scale(-1.0);
        }

        let unorm = r.update.norm();
        for g in grads.rows() {
            let denom = g.norm() * unorm;
            if denom > 0.0 {
                worst_conflict = worst_conflict.max(-g.dot(&r.update) / denom);
            }
        }

        let cosines: Vec<f64> = grads
            .rows()
            .iter()
            .map(|g| cosine_similarity(g, &r.update, EPS_DEFAULT).expect("dims"))
            .collect();
        let max = cosines.iter().cloned().fold(f64::MIN, f64::max);
        let min = cosines.iter().cloned().fold(f64::MAX, f64::min);
        worst_spread = worst_spread.max((max - min).abs() / max.abs().max(f64::MIN_POSITIVE));

        let unit = unitize(&r.update, EPS_DEFAULT);
        let proj_sum: f64 = grads.rows().iter().map(|g| g.dot(&unit)).sum();
        worst_mag = worst_mag.max((unorm - proj_sum).abs() / unorm.max(f64::MIN_POSITIVE));
    }
    [
        PropertyOutcome::new(
            "conflict-freedom",
            worst_conflict <= 1e-9,
            worst_conflict.max(0.0),
            format!("{trials} trials, worst normalized conflict {worst_conflict:.3e} (tol 1e-9)"),
        ),
        PropertyOutcome::new(
            "equal-projection",
            worst_spread < 1e-6,
            worst_spread,
            format!("{trials} trials, worst cosine spread {worst_spread:.3e} (tol 1e-6)"),
        ),
        PropertyOutcome::new(
            "magnitude-law",
            worst_mag < 1e-6,
            worst_mag,
            format!("{trials} trials, worst magnitude error {worst_mag:.3e} (tol 1e-6)"),
        ),
    ]
}

/// Closed form vs pseudoinverse form for two losses, compared at
/// eps = 0 where the identity is exact.
fn two_loss_equivalence(trials: usize) -> PropertyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240902);
    let mut worst_cos = 0.0f64; // 1 - cosine
    let mut worst_mag = 0.0f64;
    for _ in 0..trials {
        let k = rng.gen_range(2..=128);
        let g1 = normal_vector(&mut rng, k);
        let g2 = normal_vector(&mut rng, k);
        let closed = config_update_two(&g1, &g2, 0.0);
        let grads = GradientSet::new(vec![g1, g2]).expect("rows");
        let pinv = config_update(&grads, &DirectionWeights::uniform(2), 0.0).expect("update");
        let cos = cosine_similarity(&closed.update, &pinv.update, 0.0).expect("dims");
        worst_cos = worst_cos.max(1.0 - cos);
        worst_mag = worst_mag.max(
            (closed.magnitude - pinv.magnitude).abs() / pinv.magnitude.max(f64::MIN_POSITIVE),
        );
    }
    let passed = worst_cos <= 1e-10 && worst_mag <= 1e-8;
    PropertyOutcome::new(
        "two-loss-equivalence",
        passed,
        worst_cos.max(worst_mag),
        format!(
            "{trials} pairs, worst 1-cos {worst_cos:.3e} (tol 1e-10), \
             worst magnitude rel err {worst_mag:.3e} (tol 1e-8)"
        ),
    )
}

/// The published three-vector failure cases: ConFIG's vertical escape,
/// PCGrad's conflicting sum, IMTL-G's sign flip.
fn failure_vectors(opts: PropertyOptions) -> PropertyOutcome {
    let s = 3f64.sqrt() / 2.0;
    let pc_set = GradientSet::new(vec![
        Vector::from_vec(vec![1.0, 0.0, 0.1]),
        Vector::from_vec(vec![-0.5, s, 0.1]),
        Vector::from_vec(vec![-0.5, -s, 0.1]),
    ])
    .expect("rows");

    let mut worst = 0.0f64;
    let mut notes = Vec::new();

    let mut config = config_update(&pc_set, &DirectionWeights::uniform(3), EPS_DEFAULT)
        .expect("config update");
    if opts.sabotage {
        config.update = config.update.scale(-1.0);
    }
    for (got, want) in config.update.as_slice().iter().zip([0.0, 0.0, 0.3]) {
        worst = worst.max((got - want).abs() / 1e-3);
    }
    notes.push(format!(
        "config update [{:.4}, {:.4}, {:.4}] vs [0, 0, 0.3]",
        config.update[0], config.update[1], config.update[2]
    ));

    // Published PCGrad value: equal-norm inputs, ascending order.
    let unit_set =
        GradientSet::new(pc_set.rows().iter().map(|g| unitize(g, 0.0)).collect()).expect("rows");
    let orders = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
    let pcgrad = pcgrad_update_ordered(&unit_set, &orders, EPS_DEFAULT);
    for (got, want) in pcgrad.update.as_slice().iter().zip([-0.351, -0.203, 0.658]) {
        worst = worst.max((got - want).abs() / 2e-3);
    }
    if pc_set.row(0).dot(&pcgrad.update) >= 0.0 {
        worst = worst.max(2.0);
        notes.push("pcgrad failed to conflict with g1".into());
    }

    let imtl_set = GradientSet::new(vec![
        Vector::from_vec(vec![0.0412, 0.4295, 0.9394]),
        Vector::from_vec(vec![0.3571, 0.5491, 0.1414]),
        Vector::from_vec(vec![0.9823, 0.9361, 0.0552]),
    ])
    .expect("rows");
    let imtl = imtlg_update(&imtl_set, EPS_DEFAULT).expect("imtlg update");
    for c in &imtl.per_loss_cosine {
        worst = worst.max((c + 0.7086).abs() / 1e-3);
    }
    let config_i =
        config_update(&imtl_set, &DirectionWeights::uniform(3), EPS_DEFAULT).expect("update");
    for c in &config_i.per_loss_cosine {
        worst = worst.max((c - 0.7086).abs() / 1e-3);
    }
    notes.push(format!(
        "imtl-g cosine {:.4} vs config cosine {:.4}",
        imtl.per_loss_cosine[0], config_i.per_loss_cosine[0]
    ));

    PropertyOutcome::new(
        "failure-vectors",
        worst <= 1.0,
        worst,
        format!(
            "worst deviation {worst:.3}x of tolerance; {}",
            notes.join("; ")
        ),
    )
}

/// Direct descent along the conflict-free update with step 2/L on
/// convex quadratic suites: the total loss never increases.
fn theorem1_monotonicity(steps: u64, opts: PropertyOptions) -> PropertyOutcome {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for (m, suite_seed) in [(2usize, 0u64), (4, 1)] {
        let mut suite = quadratic_suite(m, 32, suite_seed);
        let gamma = 2.0 / suite.lipschitz();
        let mut theta = suite.init_params(suite_seed + 10);
        let mut prev = suite.total_loss(&theta);
        let mut increases = 0u64;
        for _ in 0..steps {
            let rows: Vec<Vector> = (0..m).map(|i| suite.loss_gradient(i, &theta)).collect();
            let grads = GradientSet::new(rows).expect("rows");
            let mut r = config_update(&grads, &DirectionWeights::uniform(m), EPS_DEFAULT)
                .expect("config update");
            if opts.sabotage {
                r.update = r.update.scale(-1.0);
            }
            sgd_step(&mut theta, &r.update, gamma);
            let loss = suite.total_loss(&theta);
            if loss > prev + 1e-12 {
                increases += 1;
                worst = worst.max(loss - prev);
            }
            prev = loss;
        }
        detail.push(format!(
            "m={m}: gamma=2/L={gamma:.3e}, {increases} increases over {steps} steps, \
             final loss {prev:.3e}"
        ));
    }
    PropertyOutcome::new(
        "theorem1-monotonicity",
        worst == 0.0,
        worst,
        detail.join("; "),
    )
}

/// Run the full suite (or the subset whose names contain `filter`).
pub fn run_properties(filter: Option<&str>, opts: PropertyOptions) -> Vec<PropertyOutcome> {
    let mut out = Vec::new();
    let matches = |name: &str| filter.is_none_or(|f| name.contains(f));

    if ["conflict-freedom", "equal-projection", "magnitude-law"]
        .iter()
        .any(|n| matches(n))
    {
        let trio = core_trio(1000, opts);
        out.extend(trio.into_iter().filter(|o| matches(o.name)));
    }
    if matches("two-loss-equivalence") {
        out.push(two_loss_equivalence(1000));
    }
    if matches("failure-vectors") {
        out.push(failure_vectors(opts));
    }
    if matches("theorem1-monotonicity") {
        out.push(theorem1_monotonicity(10_000, opts));
    }
    out
}
