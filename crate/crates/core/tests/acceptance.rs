//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always show up
//! in `cargo test` output. Criteria listed in `KNOWN_UNATTAINABLE` are
//! evaluated at their stated tolerance and must keep failing; anything else
//! that fails, or a known failure that starts passing, fails the target.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use rand::seq::index::sample;
use submax::experiments::{
    anova_chi2_ks, containment, run_bound_validation, run_chi2_lemma_scan, run_rect_simulation,
    run_spectral_experiment, run_square_simulation, summarize_spectral, SimulationOptions,
};
use submax::search::{
    alternating_search, exhaustive_max_average, multi_restart_search, SearchConfig, StatisticMode,
};
use submax::thresholds::{
    asymptotic_s, log_phi, rect_avg_threshold_inverse, solve_s, ThresholdQuery,
};
use submax::{embed_signal, gaussian_matrix, rng, Error, PlantedSignal, SubmatrixIndex};

/// Criteria that cannot hold as stated; see the note printed with each.
const KNOWN_UNATTAINABLE: &[u32] = &[2];

/// First measured exhaustive-oracle match rate for criterion 9
/// (n = 8, k = l = 2, 200 restarts, 200 matrices).
const ORACLE_MATCH_FLOOR: f64 = 1.0;

struct Verdict {
    pass: bool,
    detail: String,
}

type Check = fn() -> Verdict;

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Verdict {
    let mut checked = 0;
    let mut outside = Vec::new();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for n in [50u64, 100, 200, 500, 1_000, 10_000] {
        for tau in [0.5, 1.0, 2.0, 3.0] {
            let ln_n = (n as f64).ln();
            let (lo, hi) = (2.0 * ln_n / (tau * tau), 4.0 * ln_n / (tau * tau));
            match solve_s(n, tau) {
                Ok(s) => {
                    checked += 1;
                    let resid = log_phi(n, tau, s).unwrap().abs();
                    worst = worst.max(resid);
                    ok &= lo < s && s < hi && resid <= 1e-10;
                }
                Err(Error::NoRoot { .. }) => outside.push(format!("({n},{tau})")),
                Err(e) => {
                    ok = false;
                    outside.push(format!("({n},{tau}): {e}"));
                }
            }
        }
    }
    verdict(
        ok && checked > 0,
        format!(
            "{checked} grid points inside the bracket, max |ln phi| = {worst:.1e}; no root in the bracket at {}",
            outside.join(" ")
        ),
    )
}

fn criterion_2() -> Verdict {
    let ns = [1_000u64, 10_000, 100_000, 1_000_000];
    let mut monotone = true;
    let mut lines = Vec::new();
    for tau in [0.5, 1.0, 2.0] {
        let gaps: Vec<f64> = ns
            .iter()
            .map(|&n| (solve_s(n, tau).unwrap() - asymptotic_s(n, tau).unwrap()).abs())
            .collect();
        monotone &= gaps.windows(2).all(|w| w[1] <= w[0]);
        lines.push(format!(
            "tau={tau}: {}",
            gaps.iter()
                .map(|g| format!("{g:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    let gap = (solve_s(1_000_000, 1.0).unwrap() - asymptotic_s(1_000_000, 1.0).unwrap()).abs();
    verdict(
        monotone && gap < 0.5,
        format!(
            "gaps along n=1e3..1e6 [{}]; nonincreasing={monotone}; gap at n=1e6, tau=1 is {gap:.4} (needs < 0.5; \
             the remainder decays like ln ln n / ln n, so 0.5 is out of reach at n=1e6)",
            lines.join("; ")
        ),
    )
}

fn criterion_3() -> Verdict {
    let r = run_chi2_lemma_scan(50, 20).unwrap();
    let ref_ok =
        (r.reference_left - 0.09020).abs() <= 1e-4 && (r.reference_right - 0.55783).abs() <= 1e-4;
    verdict(r.violations.is_empty() && ref_ok, r.summary())
}

fn criterion_4() -> Verdict {
    let r = anova_chi2_ks(50_000, 4, 4).unwrap();
    verdict(
        r.passes(),
        format!(
            "KS distance {:.5} vs 1% critical value {:.5} ({} blocks, dof {})",
            r.statistic, r.critical_1pct, r.samples, r.dof
        ),
    )
}

fn criterion_5() -> Verdict {
    let avg = run_bound_validation(8, 2.0, 2000, 5, StatisticMode::Average).unwrap();
    let anova = run_bound_validation(8, 0.2, 500, 5, StatisticMode::Anova).unwrap();
    let describe = |v: &submax::experiments::BoundValidation| {
        v.rows
            .iter()
            .filter(|r| r.bound <= 1.0)
            .map(|r| format!("j={} p={:.4} bound={:.3e}", r.j, r.empirical, r.bound))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let ok = |v: &submax::experiments::BoundValidation| {
        v.rows.iter().filter(|r| r.bound <= 1.0).all(|r| r.ok)
    };
    verdict(
        ok(&avg) && ok(&anova),
        format!(
            "average (threshold {:.3}): {}; ANOVA (threshold {:.3}): {}",
            avg.threshold,
            describe(&avg),
            anova.threshold,
            describe(&anova)
        ),
    )
}

fn criterion_6() -> Verdict {
    let ks: Vec<usize> = (1..=30).collect();
    let opts = SimulationOptions::default();
    let records = run_square_simulation(100, &ks, 1000, 1, &opts).unwrap();
    let checks = containment(&records, Some(0.5));
    let expected = records.iter().filter(|r| r.tau_k > 0.5).count();
    let outside: Vec<usize> = checks.iter().filter(|c| !c.inside).map(|c| c.k).collect();
    verdict(
        outside.is_empty() && checks.len() == expected && expected > 0,
        format!(
            "{} of {expected} sizes with tau_k > 1/2 inside the interval; outside: {outside:?}",
            checks.len() - outside.len()
        ),
    )
}

fn criterion_7() -> Verdict {
    let (alpha, beta) = (20.0, 5.0);
    let opts = SimulationOptions::default();
    let records = run_rect_simulation(100, alpha, beta, &[3, 5, 8], 500, 1, 0.0, &opts).unwrap();
    let q = ThresholdQuery::new(100, 1.0).alpha(alpha).beta(beta);
    let mut ok = records.len() == 3 && records.iter().all(|r| r.m == 2000);
    let mut parts = Vec::new();
    for r in &records {
        match rect_avg_threshold_inverse(&q, 0.0, r.l as f64) {
            Ok(theory) => {
                ok &= r.tau_k < theory;
                parts.push(format!("k={} tau_k={:.3} < {:.3}", r.l, r.tau_k, theory));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("k={}: {e}", r.l));
            }
        }
    }
    verdict(ok, parts.join(", "))
}

fn criterion_8() -> Verdict {
    let recs = run_spectral_experiment(500, 1.0, 7, 7, 2.0, 20, 8).unwrap();
    let s = summarize_spectral(&recs);
    let frob = recs.iter().all(|r| (r.s1_alt - r.s1_null).abs() <= 14.0);
    let geman = (s.mean_geman_ratio - 2.0).abs() <= 0.05 * 2.0;
    let overlap = s.mean_abs_overlap_row < 0.2;
    verdict(
        frob && geman && overlap && s.all_converged,
        format!(
            "Frobenius ok in {}/{} trials; mean s1/sqrt(n) = {:.4}; mean |a'u1|/sqrt(k) = {:.4}; converged={}",
            recs.iter().filter(|r| (r.s1_alt - r.s1_null).abs() <= 14.0).count(),
            recs.len(),
            s.mean_geman_ratio,
            s.mean_abs_overlap_row,
            s.all_converged
        ),
    )
}

fn criterion_9() -> Verdict {
    let mut monotone = 0;
    for seed in 0..100u64 {
        let w = gaussian_matrix(20, 20, seed).unwrap();
        let out = alternating_search(&w, 4, 4, rng::split(seed, 99), 1000).unwrap();
        if out.trace.windows(2).all(|p| p[1] >= p[0]) {
            monotone += 1;
        }
    }

    let mut recovered = 0;
    for seed in 0..100u64 {
        let w = gaussian_matrix(50, 50, seed).unwrap();
        let mut pick = rng::chacha(rng::split(seed, 1));
        let planted = SubmatrixIndex::new(
            sample(&mut pick, 50, 5).into_vec(),
            sample(&mut pick, 50, 5).into_vec(),
        )
        .unwrap();
        let y = embed_signal(&w, &PlantedSignal::new(planted.clone(), 10.0).unwrap()).unwrap();
        let found = multi_restart_search(&y, &SearchConfig::new(5, 5, 20, seed)).unwrap();
        if found.best_index == planted {
            recovered += 1;
        }
    }

    let trials = 200u64;
    let mut matches = 0;
    for seed in 0..trials {
        let w = gaussian_matrix(8, 8, 1_000 + seed).unwrap();
        let (_, best) = exhaustive_max_average(&w, 2, 2).unwrap();
        let found = multi_restart_search(&w, &SearchConfig::new(2, 2, 200, seed)).unwrap();
        if (found.best_average - best).abs() <= 1e-12 * best.abs().max(1.0) {
            matches += 1;
        }
    }
    let rate = matches as f64 / trials as f64;
    verdict(
        monotone == 100 && recovered >= 99 && rate >= ORACLE_MATCH_FLOOR,
        format!(
            "monotone traces {monotone}/100; planted 5x5 recovered {recovered}/100; oracle match rate {rate:.3} (floor {ORACLE_MATCH_FLOOR})"
        ),
    )
}

fn submax(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_submax"))
        .args(args)
        .args(["--threads", threads])
        .env_remove("SUBMAX_THREADS")
        .output()
        .expect("run submax")
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let matrix = path("planted.csv");
    let sim = path("sim.csv");

    let setup = submax(
        &[
            "generate",
            "--m",
            "30",
            "--n",
            "30",
            "--k",
            "4",
            "--amplitude",
            "5",
            "--seed",
            "3",
            "--out",
            &matrix,
        ],
        "1",
    );
    assert!(
        setup.status.success(),
        "generate failed: {}",
        String::from_utf8_lossy(&setup.stderr)
    );
    let sim_setup = submax(
        &[
            "simulate",
            "--n",
            "30",
            "--k",
            "1..6",
            "--restarts",
            "20",
            "--seed",
            "2",
            "--out",
            &sim,
        ],
        "1",
    );
    assert!(sim_setup.status.success());

    let commands: Vec<Vec<&str>> = vec![
        vec!["threshold", "--n", "200", "--tau", "1"],
        vec![
            "threshold",
            "--n",
            "1000",
            "--tau",
            "0.5",
            "--beta",
            "5",
            "--alpha",
            "100",
            "--format",
            "csv",
        ],
        vec!["threshold", "--n", "500", "--tau", "0.5", "--anova"],
        vec!["significance", "--n", "200", "--k", "10", "--avg", "1.5"],
        vec![
            "significance",
            "--n",
            "200",
            "--k",
            "10",
            "--anova-residual",
            "0.3",
        ],
        vec![
            "search",
            "--input",
            &matrix,
            "--k",
            "4",
            "--restarts",
            "50",
            "--seed",
            "7",
        ],
        vec![
            "simulate",
            "--n",
            "30",
            "--k",
            "1..6",
            "--restarts",
            "20",
            "--seed",
            "2",
        ],
        vec![
            "simulate",
            "--n",
            "20",
            "--alpha",
            "4",
            "--beta",
            "2",
            "--k",
            "2,3",
            "--restarts",
            "10",
            "--seed",
            "2",
        ],
        vec![
            "simulate",
            "--validate-bounds",
            "--n",
            "6",
            "--tau",
            "2",
            "--trials",
            "50",
            "--seed",
            "4",
        ],
        vec![
            "spectral",
            "--n",
            "60",
            "--k",
            "4",
            "--amplitude",
            "2",
            "--trials",
            "4",
            "--seed",
            "5",
        ],
        vec!["chi2check", "--ell-max", "20"],
        vec!["replay", &sim],
    ];
    let mut differing = Vec::new();
    for cmd in &commands {
        let a = submax(cmd, "1");
        let b = submax(cmd, "8");
        let c = submax(cmd, "8");
        if !a.status.success()
            || a.stdout.is_empty()
            || a.stdout != b.stdout
            || b.stdout != c.stdout
            || a.status != b.status
        {
            differing.push(cmd[0].to_string());
        }
    }
    // generate writes its matrix to --out; compare the files.
    let g1 = path("g1.bin");
    let g8 = path("g8.bin");
    submax(
        &[
            "generate",
            "--m",
            "12",
            "--n",
            "9",
            "--k",
            "2",
            "--amplitude",
            "1",
            "--seed",
            "9",
            "--out",
            &g1,
        ],
        "1",
    );
    submax(
        &[
            "generate",
            "--m",
            "12",
            "--n",
            "9",
            "--k",
            "2",
            "--amplitude",
            "1",
            "--seed",
            "9",
            "--out",
            &g8,
        ],
        "8",
    );
    if std::fs::read(&g1).unwrap() != std::fs::read(&g8).unwrap() {
        differing.push("generate".into());
    }
    let sidecar = Path::new(&sim).with_extension("csv.provenance.json");
    verdict(
        differing.is_empty() && sidecar.exists(),
        format!(
            "{} invocations byte-identical at --threads 1 and 8; differing: {differing:?}",
            commands.len() + 1
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, Check); 10] = [
        (1, "root bracket", criterion_1),
        (2, "asymptotic agreement", criterion_2),
        (3, "chi-square tail comparison scan", criterion_3),
        (4, "chi-square law of G", criterion_4),
        (5, "bound validation", criterion_5),
        (6, "square simulation containment", criterion_6),
        (7, "rectangular ordering", criterion_7),
        (8, "spectral invariants", criterion_8),
        (9, "search properties", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_UNATTAINABLE.contains(&id);
        let status = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known, unattainable as stated)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id:>2} [{name}]: {status} in {secs:.1}s: {}",
            v.detail
        );
        if v.pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("acceptance: unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
