//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use kramers_core::constants::MU_B_OVER_H;
use kramers_core::decoherence::{
    effective_linewidth, field_noise_bound, gamma_sd, stretched_exponential, sudden_jump_monte_carlo, t1_rate,
    t2_sd, BathSpec, T1Params,
};
use kramers_core::fitting::{
    fit_hahn_decay, fit_saturation_recovery, fit_spectral_diffusion, fit_t1_temperature, fit_t2_temperature,
    reconstruct_psd, t2_from_coherence, CpmgRun, DecayTrace, HahnOptions,
};
use kramers_core::powder::{edfs, field_grid, EdfsParams, OrientationSet, Site};
use kramers_core::sequence::{
    center_frequency, filter_function, generate_ratio_sequence, predict_coherence, toggling_frame, Lorentzian,
    PulseSequence, TimeScaling, DEFAULT_MIN_SEPARATION,
};
use kramers_core::spin::{polarization, resonance_fields, ResonanceSearch};
use kramers_core::{SpinSystem, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

const B_WORK: f64 = 0.259;
const F_PROBE: f64 = 5.67e9;

fn polarization_closure() -> Outcome {
    let cases = [(0.4, 0.871), (0.7, 0.981), (1.64, 0.99996), (2.0, 0.999997)];
    let mut worst: f64 = 0.0;
    let mut got = Vec::new();
    for (g, want) in cases {
        let p = polarization(g, B_WORK, 0.026).map_err(e)?;
        worst = worst.max((p - want).abs());
        got.push(format!("{p:.6}"));
    }
    check(worst <= 1e-3, format!("P = [{}], max deviation {worst:.2e}", got.join(", ")))
}

fn sd_closure() -> Outcome {
    let t2 = t2_sd(64.5e3, 5.6).map_err(e)?;
    check(rel(t2, 1.87e-3) <= 0.02, format!("T2_SD = {:.4} ms", t2 * 1e3))
}

fn linewidth_asymptote() -> Outcome {
    let (g0, gsd, r) = (0.6e3, 64.5e3, 5.6);
    let start = effective_linewidth(0.0, g0, gsd, r).map_err(e)?;
    let end = effective_linewidth(1e3, g0, gsd, r).map_err(e)?;
    let rise = |tw: f64| effective_linewidth(tw, g0, gsd, r).map(|v| (v - start) / (end - start));
    let at_bend = rise(1.0 / r).map_err(e)?;
    let early = rise(0.1 / r).map_err(e)?;
    let late = rise(10.0 / r).map_err(e)?;
    let bend_ok = (at_bend - (1.0 - (-1f64).exp())).abs() < 1e-9 && early < 0.1 && late > 0.9999;
    let tw = logspace(1e-3, 3.0, 40);
    let y: Vec<f64> = tw
        .iter()
        .map(|&t| effective_linewidth(t, g0, gsd, r))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let fit = fit_spectral_diffusion(&DecayTrace::new(tw, y, None).map_err(e)?).map_err(e)?;
    let (fg0, fsd, fr) = (
        fit.value("gamma_0").unwrap(),
        fit.value("gamma_sd").unwrap(),
        fit.value("rate").unwrap(),
    );
    let fit_ok = rel(fg0, g0) <= 0.1 && rel(fsd, gsd) <= 0.1 && rel(fr, r) <= 0.1;
    check(
        rel(start, 600.0) < 1e-12 && rel(end, 32.85e3) < 1e-9 && bend_ok && fit_ok,
        format!(
            "{:.3} -> {:.3} kHz, {:.1}% of rise at 1/R; refit G0 {:.4} kHz, G_SD {:.3} kHz, R {:.3} Hz",
            start / 1e3,
            end / 1e3,
            100.0 * at_bend,
            fg0 / 1e3,
            fsd / 1e3,
            fr
        ),
    )
}

fn t1_recovery() -> Outcome {
    let p = T1Params::new(0.0, 0.87, 2.19, F_PROBE).map_err(e)?;
    let temps = logspace(0.026, 0.95, 16);
    let t1: Vec<f64> = temps
        .iter()
        .map(|&t| t1_rate(t, &p).map(|r| 1.0 / r))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let fit = fit_t1_temperature(&DecayTrace::new(temps, t1, None).map_err(e)?, F_PROBE).map_err(e)?;
    let (rd, rff) = (fit.value("r_d").unwrap(), fit.value("r_ff").unwrap());
    let plateau = 1.0 / t1_rate(0.026, &p).map_err(e)?;
    check(
        rel(rd, 2.19) <= 0.05 && rel(rff, 0.87) <= 0.05 && rel(plateau, 1.0 / 2.19) < 0.01 && (plateau - 0.46).abs() < 0.005,
        format!("R_D {rd:.4} Hz, R_ff {rff:.4} Hz, T1(26 mK) = {plateau:.4} s"),
    )
}

fn noise_bound() -> Outcome {
    let b = field_noise_bound(1.46e-3, 1.64).map_err(e)? * 1e9;
    check((9.0..=10.0).contains(&b), format!("{b:.3} nT"))
}

fn zeeman_geometry() -> Outcome {
    let g = Tensor::diagonal([12.2, 4.78, 1.64]);
    let sys = SpinSystem::zeeman_only(g);
    let mut fields = Vec::new();
    for (axis, want) in [([1.0, 0.0, 0.0], 33.2e-3), ([0.0, 0.0, 1.0], 247.1e-3)] {
        let dir = kramers_core::Vector3::from(axis);
        let found = resonance_fields(&sys, &dir, &ResonanceSearch::new(F_PROBE, 0.01, 0.4)).map_err(e)?;
        let b = found.first().ok_or("no resonance along a principal axis")?.field;
        let closed = F_PROBE / ((if axis[0] > 0.0 { 12.2 } else { 1.64 }) * MU_B_OVER_H);
        if rel(b, want) > 1e-3 || rel(b, closed) > 1e-6 {
            return Err(format!("axis field {:.4} mT, closed form {:.4} mT", b * 1e3, closed * 1e3));
        }
        fields.push(b);
    }
    let tp = 20e-9;
    let bw = EdfsParams::bandwidth_for_pulse(tp);
    let grid = field_grid(0.02, 0.30, 2801).map_err(e)?;
    let step = grid[1] - grid[0];
    let sites = [Site {
        label: "zeeman".into(),
        fraction: 1.0,
        system: sys,
    }];
    let spectrum = edfs(&sites, &grid, &OrientationSet::grid(50_000).map_err(e)?, &EdfsParams::new(F_PROBE, bw))
        .map_err(e)?;
    let (lo, hi) = spectrum.support().ok_or("empty spectrum")?;
    let d_lo = bw / (12.2 * MU_B_OVER_H);
    let d_hi = bw / (1.64 * MU_B_OVER_H);
    let inside = lo >= fields[0] - d_lo - step && hi <= fields[1] + d_hi + step;
    let reaches = lo <= fields[0] + d_lo + step && hi >= fields[1] - d_hi - step;
    check(
        inside && reaches,
        format!(
            "axes {:.3} / {:.3} mT; support [{:.3}, {:.3}] mT with band {:.3} / {:.3} mT",
            fields[0] * 1e3,
            fields[1] * 1e3,
            lo * 1e3,
            hi * 1e3,
            d_lo * 1e3,
            d_hi * 1e3
        ),
    )
}

fn filter_identities() -> Outcome {
    let tau = 10e-6;
    let hahn = PulseSequence::hahn(tau).map_err(e)?;
    // incommensurate with the zeros of the closed form
    let freqs: Vec<f64> = (1..=1000).map(|k| k as f64 * 0.0731 / tau).collect();
    let ff = filter_function(&hahn, &freqs);
    let mut worst: f64 = 0.0;
    for (f, w) in freqs.iter().zip(&ff.weight) {
        let om = 2.0 * PI * f;
        let closed = 16.0 * (om * tau / 2.0).sin().powi(4) / (om * om);
        worst = worst.max(rel(*w, closed));
    }
    let xy8 = PulseSequence::xy8(1, 20e-6).map_err(e)?;
    let grid = kramers_core::sequence::default_grid(&xy8);
    let w = filter_function(&xy8, &grid).weight;
    let peak = w.iter().cloned().fold(0.0, f64::max);
    let dc = w[0] / peak;
    let cpmg = PulseSequence::cpmg(16, 20e-6).map_err(e)?;
    let fc = center_frequency(&cpmg);
    let step = 1.0 / (20.0 * cpmg.total_time());
    check(
        worst <= 1e-10 && dc < 1e-18 && (fc - 25e3).abs() <= step,
        format!(
            "Hahn max rel err {worst:.1e}; XY8 DC/peak {dc:.1e}; CPMG-16 center {:.3} kHz (step {:.3} kHz)",
            fc / 1e3,
            step / 1e3
        ),
    )
}

fn toggling_invariants() -> Outcome {
    let xy8 = toggling_frame(&PulseSequence::xy8(1, 20e-6).map_err(e)?);
    let seq = generate_ratio_sequence(9.0, 20e-6, 200, DEFAULT_MIN_SEPARATION).map_err(e)?;
    let ratio = toggling_frame(&seq).ratio().ok_or("generated sequence decouples nothing")?;
    check(
        xy8.disorder_score.abs() < 1e-12
            && (xy8.zz_score - 1.0).abs() < 1e-12
            && xy8.ratio() == Some(f64::INFINITY)
            && rel(ratio, 9.0) <= 0.05,
        format!(
            "XY8 disorder {:.1e}, zz {:.6}, ratio {:?}; generated 9:1 -> {ratio:.3}:1",
            xy8.disorder_score,
            xy8.zz_score,
            xy8.ratio()
        ),
    )
}

fn monte_carlo_oracle() -> Outcome {
    let bath = BathSpec::new(5.6, 64.5e3).map_err(e)?;
    let times = linspace(0.2e-3, 4.0e-3, 20);
    let trials = 10_000;
    let hahn = sudden_jump_monte_carlo(&bath, &PulseSequence::hahn(10e-6).map_err(e)?, &times, TimeScaling::Stretch, trials, 11)
        .map_err(e)?;
    let xy8 = sudden_jump_monte_carlo(&bath, &PulseSequence::xy8(1, 20e-6).map_err(e)?, &times, TimeScaling::Stretch, trials, 11)
        .map_err(e)?;
    let sigma: Vec<f64> = hahn.std_error.iter().map(|s| s.max(1e-4)).collect();
    let trace = DecayTrace::new(hahn.trace.abscissa().to_vec(), hahn.trace.amplitude().to_vec(), Some(sigma))
        .map_err(e)?;
    let fit = fit_hahn_decay(&trace, &HahnOptions::default()).map_err(e)?;
    let (t2, n) = (fit.value("t2").unwrap(), fit.value("n").unwrap());
    let h = hahn.trace.amplitude();
    let x = xy8.trace.amplitude();
    let less = (0..times.len()).all(|k| {
        h[k] > 0.9 || x[k] - h[k] > 3.0 * (hahn.std_error[k].hypot(xy8.std_error[k]))
    });
    check(
        (1.8..=2.2).contains(&n) && rel(t2, 1.87e-3) <= 0.1 && less,
        format!("Hahn fit T2 = {:.4} ms, n = {n:.3}; XY8 above Hahn at every decayed point: {less}", t2 * 1e3),
    )
}

fn psd_round_trip() -> Outcome {
    let noise = Lorentzian { s0: 1.3e3, cutoff: 20e3 };
    let mut runs = Vec::new();
    for f0 in [5e3, 7.5e3, 10e3, 15e3, 20e3, 25e3, 35e3, 50e3] {
        let t_sep = 1.0 / (2.0 * f0);
        let cycle = PulseSequence::cpmg(2, t_sep).map_err(e)?;
        let guess = PI * PI / (8.0 * noise.s0) * (1.0 + (f0 / noise.cutoff).powi(2));
        let times = logspace(0.4 * guess, 2.5 * guess, 12);
        let curve = predict_coherence(&cycle, &noise, &times, TimeScaling::RepeatCycle).map_err(e)?;
        let t2 = t2_from_coherence(&curve).map_err(e)?;
        runs.push(CpmgRun {
            sequence: PulseSequence::cpmg(8, t_sep).map_err(e)?,
            t2,
            label: format!("{:.1}kHz", f0 / 1e3),
        });
    }
    let psd = reconstruct_psd(&runs).map_err(e)?;
    let mut worst: f64 = 0.0;
    for (f, s) in psd.frequencies.iter().zip(&psd.density) {
        let truth = noise.s0 / (1.0 + (f / noise.cutoff).powi(2));
        worst = worst.max(rel(*s, truth));
    }
    check(
        worst <= 0.15,
        format!("{} probes from 5 to 50 kHz, worst deviation {:.2}%", psd.frequencies.len(), 100.0 * worst),
    )
}

fn fit_soundness() -> Outcome {
    let mut report = Vec::new();
    let mut worst: f64 = 0.0;
    let mut note = |name: &str, got: &[f64], want: &[f64]| {
        let d = got.iter().zip(want).map(|(g, w)| rel(*g, *w)).fold(0.0, f64::max);
        worst = worst.max(d);
        report.push(format!("{name} {d:.1e}"));
    };

    let t = linspace(0.05e-3, 5e-3, 60);
    let y = t.iter().map(|&x| stretched_exponential(x, 1.0, 1.46e-3, 2.1)).collect();
    let f = fit_hahn_decay(&DecayTrace::new(t.clone(), y, None).map_err(e)?, &HahnOptions::default()).map_err(e)?;
    note("hahn", &f.values, &[1.0, 1.46e-3, 2.1]);

    let ts = linspace(0.01, 4.0, 40);
    let y = ts.iter().map(|&x| 0.7 * (1.0 - (-x / 0.73).exp())).collect();
    let f = fit_saturation_recovery(&DecayTrace::new(ts, y, None).map_err(e)?).map_err(e)?;
    note("recovery", &f.values, &[0.7, 0.73]);

    let p = T1Params::new(0.05, 0.87, 2.19, F_PROBE).map_err(e)?;
    let temps = logspace(0.026, 0.95, 16);
    let t1: Vec<f64> = temps.iter().map(|&x| 1.0 / t1_rate(x, &p).unwrap()).collect();
    let f = fit_t1_temperature(&DecayTrace::new(temps.clone(), t1, None).map_err(e)?, F_PROBE).map_err(e)?;
    note("t1(T)", &f.values, &[0.05, 0.87, 2.19]);

    let id_rate = 80.0;
    let t2: Vec<f64> = temps
        .iter()
        .map(|&x| {
            let r = t1_rate(x, &p).unwrap();
            let sd = (PI * gamma_sd(x, B_WORK, 2.80e6, 0.70).unwrap() * r).sqrt() / 2.0;
            1.0 / (sd + id_rate + 0.5 * r)
        })
        .collect();
    let f = fit_t2_temperature(&DecayTrace::new(temps, t2, None).map_err(e)?, &p, id_rate, B_WORK).map_err(e)?;
    note("t2(T)", &f.values, &[2.80e6, 0.70]);

    let tw = logspace(1e-3, 3.0, 40);
    let y = tw.iter().map(|&x| effective_linewidth(x, 0.6e3, 64.5e3, 5.6).unwrap()).collect();
    let f = fit_spectral_diffusion(&DecayTrace::new(tw, y, None).map_err(e)?).map_err(e)?;
    note("sd", &f.values, &[0.6e3, 64.5e3, 5.6]);

    // every seed must pass, not only the ensemble mean
    let t = linspace(0.02e-3, 4e-3, 256);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let (mut t2_dev, mut n_dev): (f64, f64) = (0.0, 0.0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = t
            .iter()
            .map(|&x| stretched_exponential(x, 1.0, 1.46e-3, 2.1) + noise.sample(&mut rng))
            .collect();
        let f = fit_hahn_decay(&DecayTrace::new(t.clone(), y, None).map_err(e)?, &HahnOptions::default())
            .map_err(|err| format!("seed {seed}: {err}"))?;
        t2_dev = t2_dev.max(rel(f.value("t2").unwrap(), 1.46e-3));
        n_dev = n_dev.max(rel(f.value("n").unwrap(), 2.1));
    }
    check(
        worst <= 1e-6 && t2_dev <= 0.05 && n_dev <= 0.10,
        format!(
            "noiseless max rel err [{}]; 5% noise, 256 points, 100 seeds: T2 worst {:.2}%, n worst {:.2}%",
            report.join(", "),
            100.0 * t2_dev,
            100.0 * n_dev
        ),
    )
}

fn determinism() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = root.join("configs/er167_y2o3.toml");
    let scratch = std::env::temp_dir().join(format!("kramers-acceptance-{}", std::process::id()));
    let commands: [&[&str]; 3] = [
        &["edfs", "--orientations", "120", "--points", "120"],
        &["simulate-decay", "--trials", "2000", "--points", "12"],
        &["filter", "--sequence", "xy8", "--t-sep", "20e-6"],
    ];
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for run in 0..2 {
        let dir = scratch.join(format!("run{run}"));
        let mut files = Vec::new();
        for args in commands {
            let out_dir = dir.join(args[0]);
            let status = Command::new(env!("CARGO_BIN_EXE_kramers"))
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out_dir)
                .args(["--seed", "20240611"])
                .args(args)
                .output()
                .map_err(e)?;
            if !status.status.success() {
                return Err(format!("`{}` failed: {}", args[0], String::from_utf8_lossy(&status.stderr)));
            }
            let mut names: Vec<_> = std::fs::read_dir(&out_dir)
                .map_err(e)?
                .filter_map(|d| d.ok().map(|d| d.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            names.sort();
            for p in names {
                let bytes = std::fs::read(&p).map_err(e)?;
                files.push((format!("{}/{}", args[0], p.file_name().unwrap().to_string_lossy()), bytes));
            }
        }
        outputs.push(files);
    }
    let _ = std::fs::remove_dir_all(&scratch);
    let same = outputs[0] == outputs[1] && !outputs[0].is_empty();
    check(same, format!("{} CSV files compared across two runs", outputs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("polarization closure", polarization_closure),
        ("spectral-diffusion T2 closure", sd_closure),
        ("effective linewidth asymptote and refit", linewidth_asymptote),
        ("spin-lattice rate recovery", t1_recovery),
        ("field-noise bound", noise_bound),
        ("Zeeman geometry and powder support", zeeman_geometry),
        ("filter-function identities", filter_identities),
        ("toggling-frame invariants", toggling_invariants),
        ("Monte Carlo against the closed form", monte_carlo_oracle),
        ("PSD round trip", psd_round_trip),
        ("fit-engine soundness", fit_soundness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} ({secs:.1} s)", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} ({secs:.1} s)", k + 1)
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
