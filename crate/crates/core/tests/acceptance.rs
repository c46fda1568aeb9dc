//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use cascade_core::eval::{aggregate_views, compute_froc, compute_roc_auc, FrocPoint, RankedCandidate};
use cascade_core::experiment::{run_end_to_end, Experiment, ExperimentConfig, Summary, REPORT_SENSITIVITY};
use cascade_core::tier1::{detect_candidates, Label, Tier1Config};
use cascade_core::views::{extract_patch, sample_views, ViewProvenance, ViewSampleConfig};
use cascade_core::volume::{build_phantom, resample_isometric, window_normalize, PhantomSpec, Volume};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_oracle() -> Outcome {
    let t = Instant::now();
    let mut worst_all: f64 = 0.0;
    for case in common::cases() {
        let worst = common::worst_error(&case);
        ensure(worst < 1e-4, || format!("{}: worst relative error {worst:e}", case.name))?;
        worst_all = worst_all.max(worst);
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("6 networks, 100 probes/layer, worst rel. err {worst_all:.1e}, {secs:.1} s"))
}

fn mean_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    const SCALE: f64 = (1u64 << 53) as f64;
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let n = rng.gen_range(1..=100);
        let ks: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=1u64 << 53)).collect();
        let mut probs: Vec<f64> = ks.iter().map(|&k| k as f64 / SCALE).collect();
        let exact = ks.iter().map(|&k| k as u128).sum::<u128>() as f64 / SCALE / n as f64;
        let a = aggregate_views(&probs).map_err(|e| e.to_string())?;
        probs.shuffle(&mut rng);
        let b = aggregate_views(&probs).map_err(|e| e.to_string())?;
        worst = worst.max((a - exact).abs()).max((a - b).abs());
    }
    ensure(worst <= 1e-12, || format!("deviation {worst:e}"))?;
    Ok(format!("1e5 inputs, max deviation from exact mean or permuted mean {worst:.1e}"))
}

fn view_count_fidelity() -> Outcome {
    let cfg = ViewSampleConfig::default();
    ensure(cfg.views_per_candidate() == 100, || "default N is not 100".into())?;
    let ph = build_phantom(&PhantomSpec::default()).map_err(|e| e.to_string())?;
    let cands = detect_candidates(&ph.volume, &Tier1Config::default()).map_err(|e| e.to_string())?;
    ensure(!cands.is_empty(), || "no candidates".into())?;
    let mut patches = 0;
    for c in &cands {
        let views = sample_views(&ph.volume, c, &cfg, c.id as u64).map_err(|e| e.to_string())?;
        ensure(views.len() == 100, || format!("{} views", views.len()))?;
        let mut per_scale = std::collections::BTreeMap::new();
        for p in &views {
            let v = p.provenance;
            *per_scale.entry(v.scale_mm as u64).or_insert(0) += 1;
            let t = v.translation_mm[0].hypot(v.translation_mm[1]);
            ensure(t <= 3.0, || format!("translation {t} mm"))?;
            ensure((0.0..360.0).contains(&v.rotation_deg), || format!("rotation {}", v.rotation_deg))?;
            ensure(p.patch_px == 32 && p.channels == 3 && p.pixels.len() == 3 * 32 * 32, || "patch shape".into())?;
            ensure(p.pixels.iter().all(|x| (0.0..=1.0).contains(x)), || "pixel outside window range".into())?;
            ensure(p.pixels[..1024] == p.pixels[1024..2048] && p.pixels[..1024] == p.pixels[2048..], || "channels differ".into())?;
            patches += 1;
        }
        let expect: std::collections::BTreeMap<u64, i32> = [(30, 25), (35, 25), (40, 25), (45, 25)].into();
        ensure(per_scale == expect, || format!("scales {per_scale:?}"))?;
    }
    for (hu, expect) in [(-1000.0, 0.0), (-250.0, 0.0), (500.0, 0.5), (1250.0, 1.0), (2000.0, 1.0)] {
        let v = Volume::constant([40, 40, 2], [1.0, 1.0, 5.0], [0.0; 3], hu).map_err(|e| e.to_string())?;
        let p = extract_patch(&v, 0, [20.0, 20.0, 0.0], prov(30.0, 0.0), 32, 3).map_err(|e| e.to_string())?;
        ensure(p.pixels.iter().all(|&x| (f64::from(x) - expect).abs() < 1e-7), || format!("window at {hu} HU"))?;
    }
    Ok(format!("{} candidates, {patches} patches checked", cands.len()))
}

fn prov(scale_mm: f64, rotation_deg: f64) -> ViewProvenance {
    ViewProvenance {
        scale_mm,
        translation_mm: [0.0; 2],
        rotation_deg,
    }
}

fn texture() -> Volume {
    let n = 64;
    let data = (0..n * n * 2)
        .map(|i| {
            let (x, y, z) = ((i % n) as u64, ((i / n) % n) as u64, (i / (n * n)) as u64);
            let h = (x.wrapping_mul(73_856_093) ^ y.wrapping_mul(19_349_663) ^ z.wrapping_mul(83_492_791)) % 1400;
            -200.0 + h as f32
        })
        .collect();
    Volume::new([n, n, 2], [1.0, 1.0, 5.0], [0.0; 3], data).unwrap()
}

fn geometry_oracles() -> Outcome {
    let v = texture();
    let p = 32;
    // pixel centers land exactly on voxel centers
    let c = [30.5, 28.5, 5.0];
    let a = extract_patch(&v, 0, c, prov(32.0, 0.0), p, 1).map_err(|e| e.to_string())?;
    for row in 0..p {
        for col in 0..p {
            let expect = window_normalize(f64::from(v.get(col + 15, row + 13, 1))) as f32;
            ensure(a.at(0, row, col) == expect, || format!("identity crop differs at ({row}, {col})"))?;
        }
    }
    let c = [31.3, 29.8, 5.0];
    let a = extract_patch(&v, 0, c, prov(27.0, 0.0), p, 1).map_err(|e| e.to_string())?;
    let b = extract_patch(&v, 0, c, prov(27.0, 90.0), p, 1).map_err(|e| e.to_string())?;
    let mut rot_err: f32 = 0.0;
    for i in 0..p {
        for j in 0..p {
            rot_err = rot_err.max((b.at(0, i, j) - a.at(0, j, p - 1 - i)).abs());
        }
    }
    ensure(rot_err < 1e-4, || format!("quarter-turn error {rot_err:e}"))?;

    let (dims, spacing, origin) = ([13, 9, 6], [0.8, 1.3, 5.0], [-4.0, 2.0, 7.5]);
    let field = |w: [f64; 3]| 0.9 * w[0] - 1.7 * w[1] + 0.35 * w[2] - 12.0;
    let mut data = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let w = [x, y, z].map(|i| i as f64);
                data.push(field([0, 1, 2].map(|k| origin[k] + w[k] * spacing[k])) as f32);
            }
        }
    }
    let vol = Volume::new(dims, spacing, origin, data).map_err(|e| e.to_string())?;
    let r = resample_isometric(&vol, 1.0).map_err(|e| e.to_string())?;
    let hi: Vec<f64> = (0..3).map(|k| origin[k] + (dims[k] - 1) as f64 * spacing[k]).collect();
    let mut res_err: f64 = 0.0;
    for idx in 0..r.len() {
        let w = r.world_of_index(idx);
        if (0..3).all(|k| w[k] <= hi[k] + 1e-9) {
            res_err = res_err.max((f64::from(r.data()[idx]) - field(w)).abs());
        }
    }
    ensure(res_err < 1e-4, || format!("resampling error {res_err:e}"))?;
    Ok(format!("identity crop exact, quarter-turn err {rot_err:.1e}, resampling err {res_err:.1e}"))
}

fn brute_froc(cands: &[RankedCandidate], lesions: usize, volumes: usize) -> Vec<FrocPoint> {
    let mut ts: Vec<f64> = cands.iter().map(|c| c.score).collect();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    std::iter::once(f64::INFINITY)
        .chain(ts)
        .map(|t| {
            let above: Vec<&RankedCandidate> = cands.iter().filter(|c| c.score >= t).collect();
            let found: BTreeSet<(usize, usize)> = above.iter().filter_map(|c| c.lesion.map(|k| (c.volume, k))).collect();
            FrocPoint {
                threshold: t,
                sensitivity: found.len() as f64 / lesions as f64,
                fp_per_volume: above.iter().filter(|c| c.lesion.is_none()).count() as f64 / volumes as f64,
            }
        })
        .collect()
}

fn brute_auc(scored: &[(f64, bool)]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for &(sp, _) in scored.iter().filter(|s| s.1) {
        for &(sn, _) in scored.iter().filter(|s| !s.1) {
            pairs += 1;
            twice += u64::from(sp > sn) * 2 + u64::from(sp == sn);
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn froc_auc_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let volumes = rng.gen_range(1..4);
        let cands: Vec<RankedCandidate> = (0..rng.gen_range(0..=10))
            .map(|_| {
                let lesion = if rng.gen_bool(0.5) { Some(rng.gen_range(0..3)) } else { None };
                RankedCandidate {
                    volume: rng.gen_range(0..volumes),
                    score: f64::from(rng.gen_range(0u8..6)) / 5.0,
                    label: if lesion.is_some() { Label::TrueLesion } else { Label::FalsePositive },
                    lesion,
                }
            })
            .collect();
        let distinct: BTreeSet<(usize, usize)> = cands.iter().filter_map(|c| c.lesion.map(|k| (c.volume, k))).collect();
        let lesions = distinct.len() + rng.gen_range(1..3);
        let got = compute_froc(&cands, lesions, volumes).map_err(|e| e.to_string())?;
        ensure(got == brute_froc(&cands, lesions, volumes), || format!("FROC instance {i} differs"))?;
    }
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(2..=100);
        let scored: Vec<(f64, bool)> = (0..n).map(|_| (f64::from(rng.gen_range(0u8..10)) / 9.0, rng.gen_bool(0.4))).collect();
        if !(scored.iter().any(|s| s.1) && scored.iter().any(|s| !s.1)) {
            continue;
        }
        let got = compute_roc_auc(&scored).map_err(|e| e.to_string())?;
        ensure(got == brute_auc(&scored), || format!("AUC instance {checked}: {got} vs {}", brute_auc(&scored)))?;
        checked += 1;
    }
    Ok("1000 FROC instances (<= 10 candidates) and 1000 AUC instances (<= 100, with ties) exact".into())
}

fn end_to_end(s: &Summary, secs: f64) -> Outcome {
    let t1 = s.tier1_fp_at_sensitivity.ok_or("tier 1 never reaches 80% sensitivity")?;
    let t2 = s.tier2_fp_at_sensitivity.ok_or("tier 2 never reaches 80% sensitivity")?;
    let auc = s.auc_at(100).ok_or("no AUC at N = 100")?;
    let detail = format!(
        "{} volumes, {} lesions; FP/vol at {:.0}% sens: tier 1 {t1:.3}, tier 2 {t2:.3}; AUC {auc:.4}; {secs:.0} s",
        s.volumes,
        s.lesions,
        100.0 * REPORT_SENSITIVITY
    );
    ensure(t2 <= 0.5 * t1, || format!("{detail}: tier 2 not at most half of tier 1"))?;
    ensure(auc >= 0.80, || format!("{detail}: AUC below 0.80"))?;
    ensure(secs < 900.0, || format!("{detail}: over 15 minutes"))?;
    Ok(detail)
}

fn saturation(s: &Summary) -> Outcome {
    let a25 = s.auc_at(25).ok_or("no AUC at N = 25")?;
    let a100 = s.auc_at(100).ok_or("no AUC at N = 100")?;
    let all: Vec<String> = s.tier2_auc.iter().map(|(n, a)| format!("N={n}: {a:.4}")).collect();
    ensure(a25 >= a100 - 0.01, || format!("AUC(25) {a25} < AUC(100) {a100} - 0.01"))?;
    Ok(all.join(", "))
}

fn artifact_files(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    out.extend(
        fs::read_dir(dir.join("models"))
            .unwrap()
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|n| n.ends_with(".model"))
            .map(|n| format!("models/{n}")),
    );
    out.sort();
    out
}

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.suite.lesion_patients = 8;
    cfg.suite.control_patients = 2;
    cfg.folds = 2;
    cfg.train.epochs = 2;
    cfg.seed = 2024;
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_end_to_end(cfg.clone(), a.path()).map_err(|e| e.to_string())?;
    run_end_to_end(cfg, b.path()).map_err(|e| e.to_string())?;
    let files = artifact_files(a.path());
    ensure(files == artifact_files(b.path()), || "different file sets".into())?;
    ensure(files.iter().filter(|f| f.ends_with(".model")).count() == 2, || format!("files {files:?}"))?;
    for f in &files {
        ensure(fs::read(a.path().join(f)).ok() == fs::read(b.path().join(f)).ok(), || format!("{f} differs"))?;
    }
    Ok(format!("{} CSV and model files byte-identical across two runs (10-volume suite)", files.len()))
}

fn balancing(exp: &Experiment) -> Outcome {
    let split = exp.fold_split().map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for fold in 0..split.k() {
        let r = exp.train_record(fold).map_err(|e| e.to_string())?;
        let (p, n) = r.after_balance;
        ensure(p == n && p == r.before_balance.0.max(r.before_balance.1), || format!("fold {fold}: {:?} -> {:?}", r.before_balance, r.after_balance))?;
        let scores = exp.test_scores(fold).map_err(|e| e.to_string())?;
        let mut expected = Vec::new();
        for &pt in split.test(fold) {
            for c in exp.candidates(pt).map_err(|e| e.to_string())? {
                expected.push((pt, c.id, c.label));
            }
        }
        let got: Vec<(usize, usize, Label)> = scores.iter().map(|s| (s.patient, s.candidate_id, s.label)).collect();
        ensure(got == expected, || format!("fold {fold}: test candidates resampled or missing"))?;
        lines.push(format!("{p}/{n}"));
    }
    Ok(format!("training sets {} (pos/neg); test folds scored once per candidate", lines.join(", ")))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("gradient oracle", gradient_oracle()),
        ("view fusion equals exact mean", mean_fidelity()),
        ("view-count fidelity", view_count_fidelity()),
        ("geometry oracles", geometry_oracles()),
        ("FROC/AUC oracles", froc_auc_oracles()),
    ];
    let dir = tempfile::tempdir().expect("temp dir");
    let t = Instant::now();
    let run = run_end_to_end(ExperimentConfig::default(), dir.path());
    let secs = t.elapsed().as_secs_f64();
    match &run {
        Ok(s) => {
            results.push(("end-to-end reference suite", end_to_end(s, secs)));
            results.push(("varying-N saturation", saturation(s)));
        }
        Err(e) => {
            results.push(("end-to-end reference suite", Err(e.to_string())));
            results.push(("varying-N saturation", Err("reference run failed".into())));
        }
    }
    results.push(("determinism", determinism()));
    let exp = Experiment::new(ExperimentConfig::default(), dir.path()).expect("valid config");
    results.push(("balancing", if run.is_ok() { balancing(&exp) } else { Err("reference run failed".into()) }));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("[PASS] {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("[FAIL] {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
