use robpost::experiment::{compare_families, prepare_model, replication_data, run_experiment, ExperimentConfig};
use robpost::Error;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_text(text).unwrap()
}

/// Two-sided Kolmogorov-Smirnov statistic against a continuous CDF.
fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value.
fn ks_critical(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

fn column(cfg: &ExperimentConfig, rep: usize) -> (Vec<f64>, robpost::Density) {
    let model = prepare_model(cfg).unwrap();
    let d = replication_data(cfg, &model, rep).unwrap();
    ((0..d.x.n()).map(|i| d.x.point(i)[0]).collect(), d.p_bar)
}

#[test]
fn csv_is_reproducible() {
    let c = cfg(
        "model = translation(laplace(0, 1), gaussian, 1)\ngrid = uniform(-2, 2, 41)\n\
                 truth = random(-1, 1)\nfamily = tv\nbeta = 0.3\nn = 60\nreplications = 6\nseed = 17",
    );
    let a = run_experiment(&c).unwrap().to_csv();
    let b = run_experiment(&c).unwrap().to_csv();
    assert_eq!(a, b);
    assert!(a.lines().count() > 6);
}

#[test]
fn iid_and_contaminated_data_match_their_marginals() {
    let base = "model = translation(laplace(0, 1), gaussian, 1)\ntruth = 0.4\nn = 4000\nseed = 9\n";
    let c = cfg(base);
    for rep in 0..3 {
        let (xs, p) = column(&c, rep);
        let n = xs.len();
        assert!(ks(xs, |x| p.cdf1(x)) < ks_critical(n), "rep {rep}");
    }
    let c = cfg(&format!(
        "{base}scenario = contaminated\nepsilon = 0.1\noutlier = gaussian(8, 1)"
    ));
    let (xs, p) = column(&c, 0);
    let n = xs.len();
    assert!(ks(xs, |x| p.cdf1(x)) < ks_critical(n));
}

#[test]
fn zero_contamination_is_iid() {
    let base = "model = translation(laplace(0, 1), gaussian, 1)\ntruth = random(-1, 1)\nn = 50\nseed = 4\n";
    let a = cfg(base);
    let b = cfg(&format!("{base}scenario = contaminated\nepsilon = 0"));
    for rep in 0..4 {
        assert_eq!(column(&a, rep).0, column(&b, rep).0);
    }
}

#[test]
fn symmetric_pair_recovers_true_atom() {
    let c = cfg(
        "model = translation(gaussian(0, 1), gaussian, 1)\ngrid = uniform(-0.5, 0.5, 2)\n\
                 truth = 0.5\nfamily = tv\nbeta = 0.5\nn = 400\nreplications = 100\nseed = 21",
    );
    let r = run_experiment(&c).unwrap();
    // the smallest ball excludes the other atom, which sits about 0.38 away
    assert!(r.radii[0] < 0.3);
    let wins = r
        .replications
        .iter()
        .filter(|rec| rec.ok() && rec.ball_masses[0] > 0.5)
        .count();
    assert!(wins >= 95, "{wins}/100");
}

#[test]
fn strata_concentrate_on_the_average_marginal() {
    let c = cfg(
        "scenario = non_iid\nmarginals = strata(0, 1)\nmodel = translation(uniform(0, 1), gaussian, 1)\n\
                 grid = uniform(-0.5, 0.5, 21)\nfamily = tv\nbeta = 0.5\nn = 400\nreplications = 10\nseed = 2",
    );
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.summary.failures, 0);
    let [_, median, _] = r.summary.loss_quantiles.unwrap();
    assert!(median <= 0.1, "median TV to Uniform[0,1] {median}");
    let i = r.radii.iter().position(|x| *x >= 0.2).unwrap();
    for rec in &r.replications {
        assert!(rec.ball_masses[i] >= 0.9, "{:?}", rec.ball_masses);
    }
}

#[test]
fn robust_and_likelihood_posteriors_agree_when_well_specified() {
    let c = cfg(
        "model = translation(floored(0, 1, 1e6, -2000, 2000), gaussian, 20)\ngrid = uniform(-60, 60, 201)\n\
                 truth = random(-10, 10)\nc = 0.008\ngamma = 0.001\nbeta = 1\nbeta.kl = bayes\nn = 200\n\
                 replications = 20\nseed = 8",
    );
    let fams: Vec<String> = ["tv", "hellinger", "kl(1.01e6)"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let r = compare_families(&c, &fams).unwrap();
    let kl = r.row("kl(1.01e6)").unwrap().median_loss.unwrap();
    for f in ["tv", "hellinger"] {
        let row = r.row(f).unwrap();
        assert_eq!(row.failures, 0);
        let m = row.median_loss.unwrap();
        assert!(m.max(kl) <= 3.0 * m.min(kl), "{f}: {m} vs kl {kl}");
    }
}

#[test]
fn single_family_single_replication_is_one_row() {
    let c = cfg("model = translation(laplace(0, 1), gaussian, 1)\nbeta = 0.5\nn = 30");
    let r = compare_families(&c, &["tv".to_string()]).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.to_csv().lines().count(), 2);
}

#[test]
fn kl_bound_violation_is_a_failed_replication() {
    let c = cfg(
        "scenario = contaminated\nepsilon = 0.2\nmodel = translation(gaussian(0, 1), gaussian, 1)\n\
                 grid = uniform(-1, 1, 21)\nfamilies = tv, kl(4)\nbeta = 0.5\nn = 50\nreplications = 4\nseed = 3",
    );
    let r = compare_families(&c, &c.families).unwrap();
    let kl = r.row("kl(4)").unwrap();
    assert_eq!(kl.failures, 4);
    assert!(r
        .replications
        .iter()
        .filter(|x| x.family == "kl(4)")
        .all(|x| x.status.contains("density ratio")));
    assert_eq!(r.row("tv").unwrap().failures, 0);
}

#[test]
fn infeasible_constants_are_refused() {
    // c0 = 1 + c - 3c < 0 for the TV family at c = 1
    let c = cfg("model = translation(laplace(0, 1), gaussian, 1)\nc = 1\nbeta = 0.5\nn = 30");
    match run_experiment(&c) {
        Err(Error::Infeasible(ledger)) => assert!(ledger.contains("c0_positive")),
        other => panic!("expected refusal, got {other:?}"),
    }
}

#[test]
fn ball_masses_are_monotone_probabilities() {
    let c = cfg(
        "model = translation(laplace(0, 1), cauchy, 2)\ngrid = uniform(-4, 4, 33)\ntruth = random(-2, 2)\n\
                 family = hellinger\nc = 0.008\ngamma = 0.001\nn = 80\nreplications = 5\nseed = 12",
    );
    let r = run_experiment(&c).unwrap();
    for rec in r.replications.iter().filter(|x| x.ok()) {
        assert!(rec.ball_masses.iter().all(|m| (0.0..=1.0 + 1e-12).contains(m)));
        assert!(rec.ball_masses.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}
