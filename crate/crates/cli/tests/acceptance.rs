//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p gpsphen-cli --test acceptance`. The test profile is
//! optimized, so the time budgets are enforced there too.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use gpsphen::analysis::{pca_fit, ComparisonRow, Granularity};
use gpsphen::circadian::intradaily_variability_day;
use gpsphen::geo::{haversine, Coordinate};
use gpsphen::ingest::Group;
use gpsphen::phenotypes::{place_entropy, read_phenotypes_csv};
use gpsphen::pipeline::{self, RunConfig};
use gpsphen::predict::{auc, filter_cohort, loocv_auc, Method, ModelInput, PredictionResult};
use gpsphen::stats::{ks_uniform_distance, welch_t};
use gpsphen::synth::{write_study, Arm, ScheduleSpec, StudySpec, SyntheticParticipant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed < budget
}

fn study_config(dir: &Path) -> RunConfig {
    RunConfig {
        trace_dir: Some(dir.join("in/traces")),
        roster: Some(dir.join("in/roster.csv")),
        survey: Some(dir.join("in/survey.csv")),
        output_dir: dir.join("out"),
        ..Default::default()
    }
}

fn write_inputs(dir: &Path, spec: &StudySpec) -> Vec<SyntheticParticipant> {
    let participants = spec.generate().expect("synthetic study");
    fs::create_dir_all(dir.join("in")).unwrap();
    write_study(&dir.join("in"), spec, &participants).expect("write study");
    participants
}

fn find<'a>(rows: &'a [ComparisonRow], metric: &str, granularity: Granularity) -> &'a ComparisonRow {
    rows.iter()
        .find(|r| r.metric == metric && r.granularity == granularity)
        .unwrap_or_else(|| panic!("no comparison row for {metric}"))
}

fn unit_oracles() -> Outcome {
    let start = Instant::now();
    let mut fails = Vec::new();
    let d = haversine(Coordinate::new(0.0, 0.0), Coordinate::new(0.0, 1.0));
    if (d - 111_194.9).abs() > 0.1 {
        fails.push(format!("haversine {d}"));
    }
    let alternating: Vec<f64> = (0..48).map(|i| (i % 2) as f64).collect();
    let iv = intradaily_variability_day(&alternating).unwrap();
    if iv != 4.0 {
        fails.push(format!("IV {iv}"));
    }
    let h = place_entropy(&[0.5, 0.25, 0.25]);
    if (h - 0.94639).abs() > 1e-4 {
        fails.push(format!("entropy {h}"));
    }
    let w = welch_t(&[10.0, 12.0, 14.0, 16.0], &[11.0, 13.0, 15.0, 17.0]).unwrap();
    if (w.t_statistic + 0.5477).abs() > 1e-3 || (w.degrees_freedom - 6.0).abs() > 1e-9 || (w.p_value - 0.604).abs() > 1e-3 {
        fails.push(format!("welch t {} df {} p {}", w.t_statistic, w.degrees_freedom, w.p_value));
    }
    let a = auc(&[0.9, 0.2, 0.1, 0.8], &[true, true, false, false]);
    if a != Some(0.75) {
        fails.push(format!("auc {a:?}"));
    }
    let elapsed = start.elapsed();
    if !within(elapsed, Duration::from_secs(1)) {
        fails.push(format!("took {elapsed:?}"));
    }
    Outcome {
        pass: fails.is_empty(),
        detail: if fails.is_empty() {
            format!("haversine {d:.3} m, IV {iv}, entropy {h:.5}, t {:.4} df {} p {:.4}, AUC 0.75", w.t_statistic, w.degrees_freedom, w.p_value)
        } else {
            fails.join("; ")
        },
    }
}

/// Rows with a few latent daily rhythms plus noise, shaped like displacement profiles.
fn profile_like_matrix(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis: Vec<Vec<f64>> = (0..5)
        .map(|k| (0..p).map(|j| ((k + 1) as f64 * j as f64 * std::f64::consts::PI / p as f64).sin()).collect())
        .collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..5).map(|k| rng.sample::<f64, _>(StandardNormal) * (600.0 / (k + 1) as f64)).collect();
            (0..p)
                .map(|j| {
                    let signal: f64 = z.iter().zip(&basis).map(|(a, b)| a * b[j]).sum();
                    signal + 50.0 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        })
        .collect()
}

fn pca_integrity() -> Outcome {
    let data = profile_like_matrix(6442, 47, 11);
    let start = Instant::now();
    let model = pca_fit(&data, 47, false).unwrap();
    let elapsed = start.elapsed();
    let mut fails = Vec::new();

    let mut max_off = 0.0f64;
    let mut max_diag = 0.0f64;
    for (a, la) in model.loadings.iter().enumerate() {
        for (b, lb) in model.loadings.iter().enumerate() {
            let d: f64 = la.iter().zip(lb).map(|(x, y)| x * y).sum();
            if a == b {
                max_diag = max_diag.max((d - 1.0).abs());
            } else {
                max_off = max_off.max(d.abs());
            }
        }
    }
    if max_off >= 1e-8 || max_diag >= 1e-8 {
        fails.push(format!("orthonormality off {max_off:e} diag {max_diag:e}"));
    }
    let ratio_sum: f64 = model.full_explained_variance_ratio.iter().sum();
    if (ratio_sum - 1.0).abs() > 1e-9 {
        fails.push(format!("ratio sum {ratio_sum}"));
    }
    let mut max_err = 0.0f64;
    for (row, scores) in data.iter().zip(&model.scores) {
        for (x, r) in row.iter().zip(model.reconstruct(scores)) {
            max_err = max_err.max((x - r).abs());
        }
    }
    if max_err >= 1e-6 {
        fails.push(format!("reconstruction {max_err:e}"));
    }
    let stable = (0..10).all(|_| pca_fit(&data, 47, false).unwrap().loadings == model.loadings);
    if !stable {
        fails.push("loadings differ between runs".into());
    }
    if !within(elapsed, Duration::from_secs(5)) {
        fails.push(format!("took {elapsed:?}"));
    }
    Outcome {
        pass: fails.is_empty(),
        detail: if fails.is_empty() {
            format!(
                "off-diagonal {max_off:.1e}, ratio sum - 1 = {:.1e}, reconstruction {max_err:.1e}, 10 identical runs, fit {elapsed:.2?}",
                ratio_sum - 1.0
            )
        } else {
            fails.join("; ")
        },
    }
}

fn calibration(model_input: &ModelInput) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let p_values: Vec<f64> = (0..10_000)
        .map(|_| {
            let a: Vec<f64> = (0..12).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Vec<f64> = (0..20).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            welch_t(&a, &b).unwrap().p_value
        })
        .collect();
    let ks = ks_uniform_distance(&p_values);

    let method = Method::Logistic(Default::default());
    let mut seed_means = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut shuffled = model_input.clone();
        for group in [Group::Pre, Group::Post] {
            let idx: Vec<usize> = (0..shuffled.rows.len()).filter(|&i| shuffled.rows[i].group == group).collect();
            let mut labels: Vec<bool> = idx.iter().map(|&i| shuffled.rows[i].severe_sad).collect();
            labels.shuffle(&mut rng);
            for (&i, l) in idx.iter().zip(labels) {
                shuffled.rows[i].severe_sad = l;
            }
        }
        let cohort = filter_cohort(&shuffled);
        let aucs: Vec<f64> = [Group::Pre, Group::Post]
            .iter()
            .flat_map(|&g| loocv_auc(&cohort.input.for_group(g), &method).unwrap().aucs())
            .collect();
        seed_means.push(aucs.iter().sum::<f64>() / aucs.len() as f64);
    }
    let grand = seed_means.iter().sum::<f64>() / seed_means.len() as f64;
    let lo = seed_means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = seed_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let elapsed = start.elapsed();
    let pass = ks < 0.05 && lo >= 0.45 && hi <= 0.55 && within(elapsed, Duration::from_secs(120));
    Outcome {
        pass,
        detail: format!(
            "null Welch KS {ks:.4} over 10000 tests, shuffled-label AUC mean {grand:.4} over 20 seeds (per-seed {lo:.3}..{hi:.3}), {elapsed:.1?}"
        ),
    }
}

fn directionality(rows: &[ComparisonRow], elapsed: Duration) -> Outcome {
    // POST minus PRE; PRE-higher metrics need a negative t
    let checks = [
        ("num.pls", Granularity::Participant, -1.0),
        ("perc.home", Granularity::Participant, 1.0),
        ("IV", Granularity::Participant, -1.0),
        ("RA", Granularity::Participant, -1.0),
    ];
    let mut pass = within(elapsed, Duration::from_secs(180));
    let mut parts = Vec::new();
    for (metric, gran, sign) in checks {
        let r = find(rows, metric, gran);
        let ok = r.welch.t_statistic * sign > 0.0 && r.welch.p_value < 0.01;
        pass &= ok;
        parts.push(format!("{metric} pre {:.3} post {:.3} p {:.1e}", r.mean_pre, r.mean_post, r.welch.p_value));
    }
    parts.push(format!("{elapsed:.1?}"));
    Outcome { pass, detail: parts.join(", ") }
}

fn pca_separation(rows: &[ComparisonRow], contrast: &[f64]) -> Outcome {
    let hit = contrast.iter().take(10).enumerate().find_map(|(k, &c)| {
        let r = find(rows, &format!("PC{}", k + 1), Granularity::Day);
        (c.abs() >= 0.1 && r.welch.p_value < 0.01).then(|| (k + 1, c, r))
    });
    match hit {
        Some((k, c, r)) => Outcome {
            pass: true,
            detail: format!(
                "PC{k}: contrast {c:.3}, mean score pre {:.1} post {:.1}, p {:.1e}",
                r.mean_pre, r.mean_post, r.welch.p_value
            ),
        },
        None => Outcome {
            pass: false,
            detail: format!("no PC among the first 10 with |contrast| >= 0.1 and p < 0.01 (contrasts {contrast:.2?})"),
        },
    }
}

fn bayes_auc(result: &PredictionResult, truth: &BTreeMap<&str, &SyntheticParticipant>) -> f64 {
    let v: Vec<f64> = result
        .per_participant
        .iter()
        .filter(|p| p.auc.is_some())
        .filter_map(|p| {
            let sp = truth[p.participant_id.as_str()];
            let eta: Vec<f64> = sp.days.iter().map(|d| d.eta).collect();
            let y: Vec<bool> = sp.days.iter().map(|d| d.severe_sad).collect();
            auc(&eta, &y)
        })
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn prediction_ceiling(cfg: &RunConfig, participants: &[SyntheticParticipant]) -> Outcome {
    let start = Instant::now();
    let summary = pipeline::run_predict(cfg).expect("predict");
    let elapsed = start.elapsed();
    let truth: BTreeMap<&str, &SyntheticParticipant> =
        participants.iter().map(|p| (p.trace.participant_id.as_str(), p)).collect();
    let get = |method: &str, g: Group| summary.results.iter().find(|r| r.method == method && r.group == Some(g)).unwrap();
    let mut pass = within(elapsed, Duration::from_secs(300));
    let mut parts = Vec::new();
    for g in [Group::Pre, Group::Post] {
        let (lr, rf) = (get("logistic", g), get("forest", g));
        let bayes = bayes_auc(lr, &truth);
        pass &= (lr.mean_auc - bayes).abs() <= 0.05 && rf.mean_auc >= lr.mean_auc - 0.05;
        parts.push(format!("{g}: bayes {bayes:.3} logistic {:.3} forest {:.3}", lr.mean_auc, rf.mean_auc));
    }
    parts.push(format!("{elapsed:.1?}"));
    Outcome { pass, detail: parts.join(", ") }
}

fn hash_outputs(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        let bytes = fs::read(&entry).unwrap();
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        out.insert(entry.strip_prefix(dir).unwrap().display().to_string(), hex);
    }
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            files.extend(walk(&path));
        } else {
            files.push(path);
        }
    }
    files.sort();
    files
}

fn determinism(root: &Path) -> Outcome {
    let dir = root.join("determinism");
    write_inputs(&dir, &StudySpec::two_arm(8, 14, 5));
    let cfg = RunConfig {
        forest: gpsphen::predict::ForestConfig { n_trees: 50, ..Default::default() },
        ..study_config(&dir)
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        if cfg.output_dir.exists() {
            fs::remove_dir_all(&cfg.output_dir).unwrap();
        }
        pipeline::run_pipeline(&cfg).expect("pipeline");
        runs.push(hash_outputs(&cfg.output_dir));
    }
    let differing: Vec<&String> = runs[0].keys().filter(|k| runs[1].get(*k) != runs[0].get(*k)).collect();
    Outcome {
        pass: differing.is_empty() && runs[0].len() == runs[1].len() && !runs[0].is_empty(),
        detail: if differing.is_empty() {
            format!("{} output files identical by SHA-256 across two runs", runs[0].len())
        } else {
            format!("differing files: {differing:?}")
        },
    }
}

fn scale(root: &Path) -> Outcome {
    let dir = root.join("scale");
    let spec = StudySpec {
        seed: 126,
        arms: vec![
            Arm { spec: ScheduleSpec::pre_like(), n_participants: 74, n_days: 47 },
            Arm { spec: ScheduleSpec::post_like(), n_participants: 52, n_days: 57 },
        ],
    };
    let participants = write_inputs(&dir, &spec);
    let n_days: usize = participants.iter().map(|p| p.days.len()).sum();
    let cfg = study_config(&dir);

    let start = Instant::now();
    pipeline::run_pipeline(&RunConfig { skip_forest: true, ..cfg.clone() }).expect("pipeline");
    let without_forest = start.elapsed();
    let start = Instant::now();
    pipeline::run_predict(&cfg).expect("predict with forest");
    let with_forest = without_forest + start.elapsed();
    let pass = participants.len() == 126
        && n_days == 6442
        && within(without_forest, Duration::from_secs(60))
        && within(with_forest, Duration::from_secs(300));
    Outcome {
        pass,
        detail: format!(
            "{} participants, {n_days} days: {without_forest:.1?} without forest, {with_forest:.1?} with it ({} threads)",
            participants.len(),
            rayon::current_num_threads()
        ),
    }
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let root = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let report = |name: &'static str, o: Outcome, results: &mut Vec<(&str, Outcome)>| {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    report("1 unit oracles", unit_oracles(), &mut results);
    report("2 PCA integrity", pca_integrity(), &mut results);

    // 50 x 60 per arm, shared by criteria 3 through 6
    let dir = root.path().join("cohort");
    let start = Instant::now();
    let participants = write_inputs(&dir, &StudySpec::two_arm(50, 60, 2024));
    let cfg = study_config(&dir);
    pipeline::run_pipeline(&RunConfig { skip_forest: true, ..cfg.clone() }).expect("pipeline");
    let end_to_end = start.elapsed();
    let rows = pipeline::run_compare(&cfg).expect("compare");
    let contrast = pipeline::run_pca(&cfg).expect("pca").morning_evening_contrast;
    let pheno = read_phenotypes_csv(fs::File::open(cfg.output_dir.join("phenotypes.csv")).unwrap()).unwrap();
    let model_input = ModelInput::from_phenotypes(&pheno);

    report("3 calibration", calibration(&model_input), &mut results);
    report("4 directionality", directionality(&rows, end_to_end), &mut results);
    report("5 PCA separation", pca_separation(&rows, &contrast), &mut results);
    report("6 prediction ceiling", prediction_ceiling(&cfg, &participants), &mut results);
    report("7 determinism", determinism(root.path()), &mut results);
    report("8 scale", scale(root.path()), &mut results);

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
