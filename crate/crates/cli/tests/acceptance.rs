//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! straight to stderr (bypassing output capture) and then asserts.
//!
//! Command outputs are produced once per process and shared; the
//! determinism check reruns every command with a different worker count
//! and compares the CSVs byte for byte.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};

use chunklab::averaging::{running_averages, AveragerMode, AveragerState};
use chunklab::metrics::{chunking_proportion, median, spearman};
use chunklab::model::{loss_and_grad, mlp_init, Activation, MlpConfig, ParamVector};
use chunklab::rng::seeded;
use rand::Rng;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance] criterion {id:>2} {status}: {name} ({detail})");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn work_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn run_cli(cmd: &str, out: &Path, jobs: usize) {
    if out.exists() {
        std::fs::remove_dir_all(out).unwrap();
    }
    let status = Command::new(env!("CARGO_BIN_EXE_chunklab"))
        .args([cmd, "--out", out.to_str().unwrap(), "--jobs", &jobs.to_string()])
        .status()
        .expect("failed to launch chunklab");
    assert!(status.success(), "chunklab {cmd} exited with {status}");
}

/// Output directory of the first run of `cmd` (with one worker).
fn first_run(cmd: &'static str) -> PathBuf {
    static RUNS: OnceLock<Mutex<BTreeMap<&'static str, PathBuf>>> = OnceLock::new();
    static LOCKS: OnceLock<Mutex<BTreeMap<&'static str, &'static Mutex<()>>>> = OnceLock::new();
    let lock: &'static Mutex<()> = {
        let mut locks = LOCKS.get_or_init(Default::default).lock().unwrap();
        locks.entry(cmd).or_insert_with(|| Box::leak(Box::new(Mutex::new(()))))
    };
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    let runs = RUNS.get_or_init(Default::default);
    if let Some(p) = runs.lock().unwrap().get(cmd) {
        return p.clone();
    }
    let out = work_dir().join(cmd).join("run1");
    run_cli(cmd, &out, 1);
    runs.lock().unwrap().insert(cmd, out.clone());
    out
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Self {
        let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mut lines = text.lines();
        let header = lines.next().expect("empty csv").split(',').map(String::from).collect();
        let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
    }

    fn get(&self, row: &[String], name: &str) -> String {
        row[self.col(name)].clone()
    }

    fn num(&self, row: &[String], name: &str) -> f64 {
        self.get(row, name).parse().unwrap()
    }
}

#[test]
fn criterion_01_chunking_proportion_arithmetic() {
    let a = chunking_proportion(73.72, 63.35, 53.00).unwrap();
    let b = chunking_proportion(60.63, 50.54, 39.02).unwrap();
    let pass = (a - 50.05).abs() <= 0.01 && (b - 46.69).abs() <= 0.01;
    verdict(1, "chunking proportion arithmetic", pass, &format!("{a:.4}% and {b:.4}%"));
}

#[test]
fn criterion_02_posterior_chunking_invariance() {
    let dir = first_run("linear-study");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("linear_report.json")).unwrap()).unwrap();
    let inv = &report["invariance"];
    let setup = inv["d"] == 5 && inv["k"] == 10 && inv["chunk_size"] == 40 && inv["noise_var"] == 1.0 && inv["seeds"] == 20;
    let m = inv["max_mean_rel_err"].as_f64().unwrap();
    let p = inv["max_precision_rel_err"].as_f64().unwrap();
    let pass = setup && m <= 1e-8 && p <= 1e-8 && inv["passed"] == true;
    verdict(2, "BLR chunking invariance", pass, &format!("mean rel err {m:e}, precision rel err {p:e}"));
}

#[test]
fn criterion_03_weight_averaging_converges_to_blr() {
    let dir = first_run("linear-study");
    let t = Table::read(&dir.join("linear_study.csv"));
    let mut by_s: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &t.rows {
        by_s.entry(t.get(r, "S").parse().unwrap()).or_default().push(t.num(r, "gap"));
    }
    let sizes: Vec<usize> = by_s.keys().copied().collect();
    let seeds_ok = by_s.values().all(|g| g.len() == 20);
    let means: Vec<(f64, f64)> =
        by_s.iter().map(|(&s, g)| (s as f64, g.iter().sum::<f64>() / g.len() as f64)).collect();
    // Least-squares slope of log mean gap on log S.
    let n = means.len() as f64;
    let lx: Vec<f64> = means.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = means.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let gap = |s: usize| means.iter().find(|p| p.0 == s as f64).map(|p| p.1).unwrap_or(f64::NAN);
    let pass = sizes == [50, 100, 200, 400, 800] && seeds_ok && gap(800) < gap(50) && slope < 0.0;
    verdict(
        3,
        "WA-to-BLR gap shrinks with chunk size",
        pass,
        &format!("mean gap {:.5} at S=50, {:.5} at S=800, log-log slope {slope:.3}", gap(50), gap(800)),
    );
}

#[test]
fn criterion_04_weight_averaging_identities() {
    let mut rng = seeded(404, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let len = rng.random_range(1..20);
        let n = rng.random_range(1..30);
        let cps: Vec<ParamVector> = (0..n)
            .map(|_| ParamVector::from_flat((0..len).map(|_| rng.random_range(-5.0..5.0)).collect()))
            .collect();
        let avg = running_averages(AveragerMode::Mean, &cps).unwrap().pop().unwrap();
        for i in 0..len {
            let batch = cps.iter().map(|c| c.values()[i]).sum::<f64>() / n as f64;
            worst = worst.max((avg.values()[i] - batch).abs());
        }
    }
    let mean_ok = worst <= 1e-12;

    let mut ema_ok = true;
    for alpha in [0.0, 0.8, 0.95, 1.0] {
        let cps: Vec<ParamVector> = (0..25)
            .map(|_| ParamVector::from_flat((0..7).map(|_| rng.random_range(-3.0..3.0)).collect()))
            .collect();
        let mut state = AveragerState::new(AveragerMode::ema(alpha).unwrap());
        let mut prev: Option<Vec<f64>> = None;
        for (k, c) in cps.iter().enumerate() {
            state.update(c).unwrap();
            let got = state.get().unwrap().values().to_vec();
            let expect: Vec<f64> = match &prev {
                None => c.values().to_vec(),
                Some(p) => p.iter().zip(c.values()).map(|(a, t)| alpha * a + (1.0 - alpha) * t).collect(),
            };
            ema_ok &= got == expect;
            if alpha == 0.0 {
                ema_ok &= got == c.values();
            }
            if alpha == 1.0 {
                ema_ok &= got == cps[0].values();
            }
            ema_ok &= state.chunk_count() == k + 1;
            prev = Some(got);
        }
    }
    verdict(
        4,
        "weight-averaging identities",
        mean_ok && ema_ok,
        &format!("max |incremental - batch mean| {worst:e}, EMA recursion exact: {ema_ok}"),
    );
}

#[test]
fn criterion_05_gradient_correctness() {
    let mut rng = seeded(505, 0);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut sizes = vec![rng.random_range(1..6)];
        for _ in 0..rng.random_range(0..3) {
            sizes.push(rng.random_range(1..8));
        }
        let classes = rng.random_range(2..6);
        sizes.push(classes);
        let act = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh };
        let cfg = MlpConfig::new(sizes.clone(), act).unwrap();
        let mut p = mlp_init(&cfg, rng.random()).unwrap();
        for v in p.values_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        let n = rng.random_range(1..9);
        let x: Vec<f64> = (0..n * sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let (_, g) = loss_and_grad(&p, &cfg, &x, &y).unwrap();
        let mut probe = p.clone();
        let mut diff = 0.0;
        let mut fd_norm = 0.0;
        for i in 0..p.len() {
            let o = probe.values()[i];
            probe.values_mut()[i] = o + h;
            let up = loss_and_grad(&probe, &cfg, &x, &y).unwrap().0;
            probe.values_mut()[i] = o - h;
            let down = loss_and_grad(&probe, &cfg, &x, &y).unwrap().0;
            probe.values_mut()[i] = o;
            let fd = (up - down) / (2.0 * h);
            diff += (fd - g.values()[i]).powi(2);
            fd_norm += fd * fd;
        }
        let rel = diff.sqrt() / g.norm().max(fd_norm.sqrt()).max(1e-12);
        worst = worst.max(rel);
    }
    verdict(5, "gradient matches central differences", worst < 1e-4, &format!("worst relative error {worst:e} over 100 draws"));
}

/// Per-(chunk_size, averager) accuracies from the averaging sweep.
fn curve() -> BTreeMap<(usize, String), Vec<f64>> {
    let t = Table::read(&first_run("wa-compare").join("chunk_curve.csv"));
    let mut m: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for r in &t.rows {
        assert_eq!(t.get(r, "method"), "plain-sgd");
        m.entry((t.get(r, "chunk_size").parse().unwrap(), t.get(r, "averager")))
            .or_default()
            .push(t.num(r, "final_test_acc"));
    }
    m
}

#[test]
fn criterion_06_chunking_curve_shape() {
    let m = curve();
    let sizes: Vec<usize> = m.keys().filter(|k| k.1 == "none").map(|k| k.0).rev().collect();
    let train_len = sizes[0];
    let counts: Vec<f64> = sizes.iter().map(|&s| (train_len / s) as f64).collect();
    let accs: Vec<f64> = sizes
        .iter()
        .map(|&s| {
            let v = &m[&(s, "none".to_string())];
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let rho = spearman(&counts, &accs);
    let offline = accs[0];
    let five_seeds = m.values().all(|v| v.len() == 5);
    let pass = counts == [1.0, 2.0, 5.0, 10.0, 25.0, 50.0] && five_seeds && offline >= 0.95 && rho <= -0.8;
    verdict(
        6,
        "accuracy falls with chunk count",
        pass,
        &format!("offline acc {offline:.4}, Spearman {rho:.3}, seed-mean accs {accs:.4?}"),
    );
}

#[test]
fn criterion_07_forgetting_protocol() {
    let dir = first_run("forgetting");
    let mut diag = Vec::new();
    let mut gaps = Vec::new();
    let mut seeds = 0;
    for entry in std::fs::read_dir(dir.join("plain-sgd")).unwrap() {
        let seed_dir = entry.unwrap().path();
        seeds += 1;
        let a = Table::read(&seed_dir.join("accuracy_matrix_none.csv"));
        assert_eq!(a.rows.len(), 50);
        for (c, name) in a.header.iter().enumerate() {
            if let Some(j) = name.strip_prefix("acc_chunk_") {
                let j: usize = j.parse().unwrap();
                diag.push(a.rows[j - 1][c].parse::<f64>().unwrap());
            }
        }
        let f = Table::read(&seed_dir.join("forgetting_none.csv"));
        for r in &f.rows {
            let (k, j) = (f.num(r, "k"), f.num(r, "j"));
            if k >= j + 5.0 {
                gaps.push(f.num(r, "G"));
            }
        }
    }
    let med = median(&gaps);
    let pass = seeds >= 3 && !diag.is_empty() && diag.iter().all(|&d| d == 1.0) && med < 0.05;
    verdict(
        7,
        "tracked chunks learned then forgotten to test level",
        pass,
        &format!("{seeds} seeds, diagonal {diag:?}, median G(k>=j+5) {med:.4}"),
    );
}

#[test]
fn criterion_08_weight_averaging_helps() {
    let m = curve();
    let med = |s: usize, a: &str| median(&m[&(s, a.to_string())]);
    let smallest = m.keys().map(|k| k.0).min().unwrap();
    let (final_w, mean_w) = (med(smallest, "none"), med(smallest, "mean"));
    let sizes: Vec<usize> = m.keys().filter(|k| k.1 == "mean").map(|k| k.0).collect();
    let wins = sizes
        .iter()
        .filter(|&&s| med(s, "mean") >= med(s, "ema:0.8") && med(s, "mean") >= med(s, "ema:0.95"))
        .count();
    let pass = mean_w > final_w && 2 * wins >= sizes.len();
    verdict(
        8,
        "mean averaging beats final weights",
        pass,
        &format!("50 chunks: mean {mean_w:.4} vs final {final_w:.4}; mean >= both EMAs at {wins}/{} chunk counts", sizes.len()),
    );
}

#[test]
fn criterion_09_stability_gap() {
    let dir = first_run("stability");
    let mut dips = Vec::new();
    let mut seeds = 0;
    for entry in std::fs::read_dir(dir.join("plain-sgd")).unwrap() {
        let t = Table::read(&entry.unwrap().path().join("stability.csv"));
        assert_eq!(t.rows.len(), 9);
        dips.extend(t.rows.iter().map(|r| t.num(r, "dip")));
        seeds += 1;
    }
    let mean = dips.iter().sum::<f64>() / dips.len() as f64;
    verdict(9, "accuracy dips after chunk boundaries", seeds == 3 && mean > 0.0, &format!("{seeds} seeds, mean dip {mean:.5}"));
}

#[test]
fn criterion_10_averaging_transfers_to_class_incremental() {
    let dir = first_run("cl-compare");
    let t = Table::read(&dir.join("cl_compare.csv"));
    assert_eq!(t.rows.len(), 24);
    let mut acc: BTreeMap<(String, String, String), f64> = BTreeMap::new();
    for r in &t.rows {
        acc.insert((t.get(r, "setting"), t.get(r, "method"), format!("{}/{}", t.get(r, "averager"), t.get(r, "seed"))), t.num(r, "final_acc"));
    }
    let mut detail = Vec::new();
    let mut pass = true;
    for setting in ["standard", "online"] {
        let deltas: Vec<f64> = (0..3)
            .map(|s| {
                let k = |a: &str| (setting.to_string(), "er".to_string(), format!("{a}/{s}"));
                acc[&k("mean")] - acc[&k("none")]
            })
            .collect();
        let med = median(&deltas);
        pass &= med > 0.0;
        detail.push(format!("{setting} median ΔAcc {med:+.4}"));
    }
    let steps = Table::read(&dir.join("cl_steps.csv"));
    let online: Vec<f64> = steps.rows.iter().filter(|r| r[0] == "online").map(|r| steps.num(r, "steps")).collect();
    // 5 tasks of 1600 examples, one pass in batches of 32.
    let single_pass = !online.is_empty() && online.iter().all(|&s| s == 250.0);
    verdict(10, "WA-ER improves on ER", pass && single_pass, &format!("{}, online single pass: {single_pass}", detail.join(", ")));
}

fn csv_files(dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>, root: &Path) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            csv_files(&p, out, root);
        } else if p.extension().is_some_and(|e| e == "csv" || e == "json") {
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
        }
    }
}

#[test]
fn criterion_11_determinism() {
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for cmd in ["linear-study", "wa-compare", "forgetting", "stability", "cl-compare"] {
        let first = first_run(cmd);
        let second = work_dir().join(cmd).join("run2");
        run_cli(cmd, &second, 2);
        let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
        csv_files(&first, &mut a, &first);
        csv_files(&second, &mut b, &second);
        compared += a.len();
        if a != b {
            mismatched.push(cmd);
        }
    }
    verdict(
        11,
        "reruns give byte-identical outputs",
        mismatched.is_empty(),
        &format!("{compared} files compared across 5 commands, mismatches in {mismatched:?}"),
    );
}
