use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use kramers_core::decoherence::{gamma_sd, sudden_jump_monte_carlo, t1_rate, t2_sd, t2_total, BathSpec};
use kramers_core::fitting::{
    fit_hahn_decay, fit_saturation_recovery, fit_spectral_diffusion, fit_t1_temperature, fit_t2_temperature,
    reconstruct_psd, CpmgRun, DecayTrace, FitResult, HahnOptions,
};
use kramers_core::powder::{edfs, field_grid, EdfsParams, OrientationSet};
use kramers_core::sequence::{
    center_frequency, default_grid, filter_function, generate_ratio_sequence, make_sequence, read_table,
    toggling_frame, write_table, SequenceKind, TimeScaling,
};
use kramers_core::spin::{find_transitions, level_sweep, TransitionQuery};
use kramers_core::{FieldPoint, PulseSequence, Vector3};

use crate::config::{load_config, Loaded, RunConfig};
use crate::error::CliError;
use crate::output::{num, sha256_hex, Outputs};
use crate::{usage, Cli, Cmd, FitKind, SequenceName};

struct Context {
    config: Option<RunConfig>,
    out: Outputs,
    seed: Option<u64>,
}

impl Context {
    fn config(&self) -> Result<&RunConfig, CliError> {
        self.config
            .as_ref()
            .ok_or_else(|| usage("this command needs --config"))
    }

    /// Seed for a stochastic command; recorded in every manifest written after.
    fn require_seed(&mut self) -> Result<u64, CliError> {
        let seed = self.seed.ok_or_else(|| {
            CliError::Config("a seed is required: pass --seed or set simulation.seed".into())
        })?;
        self.out.seed = Some(seed);
        Ok(seed)
    }
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Config => "config",
        Cmd::Levels(_) => "levels",
        Cmd::Edfs(_) => "edfs",
        Cmd::Transitions(_) => "transitions",
        Cmd::Rabi(_) => "rabi",
        Cmd::Filter(_) => "filter",
        Cmd::Ratio(_) => "ratio",
        Cmd::SimulateDecay(_) => "simulate-decay",
        Cmd::Fit(_) => "fit",
        Cmd::Psd(_) => "psd",
        Cmd::PredictT2(_) => "predict-t2",
    }
}

pub fn run(cli: &Cli, args: Vec<String>) -> Result<(), CliError> {
    let loaded: Option<Loaded> = cli.config.as_deref().map(load_config).transpose()?;
    let config_sha = loaded.as_ref().map(|l| sha256_hex(&l.raw));
    let config = loaded.map(|l| l.config);
    let out_dir: PathBuf = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.paths.out.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed.or(config.as_ref().and_then(|c| c.simulation.seed));
    let mut ctx = Context {
        out: Outputs::new(&out_dir, command_name(&cli.command), args, config_sha)?,
        config,
        seed,
    };
    match &cli.command {
        Cmd::Config => echo_config(&mut ctx),
        Cmd::Levels(a) => levels(&mut ctx, a),
        Cmd::Edfs(a) => edfs_cmd(&mut ctx, a),
        Cmd::Transitions(a) => transitions(&mut ctx, a),
        Cmd::Rabi(a) => rabi(&mut ctx, a),
        Cmd::Filter(a) => filter(&mut ctx, a),
        Cmd::Ratio(a) => ratio(&mut ctx, a),
        Cmd::SimulateDecay(a) => simulate_decay(&mut ctx, a),
        Cmd::Fit(a) => fit(&mut ctx, a),
        Cmd::Psd(a) => psd(&mut ctx, a),
        Cmd::PredictT2(a) => predict_t2(&mut ctx, a),
    }?;
    for p in ctx.out.written() {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn echo_config(ctx: &mut Context) -> Result<(), CliError> {
    let text = toml::to_string_pretty(ctx.config()?).map_err(|e| CliError::Config(e.to_string()))?;
    print!("{text}");
    ctx.out.bytes("config.toml", text.as_bytes())
}

fn direction(c: &RunConfig) -> Vector3<f64> {
    Vector3::from(c.experiment.direction).normalize()
}

fn levels(ctx: &mut Context, a: &crate::LevelsArgs) -> Result<(), CliError> {
    let c = ctx.config()?.clone();
    let site = match &a.site {
        Some(label) => c
            .spin
            .sites
            .iter()
            .find(|s| &s.label == label)
            .ok_or_else(|| usage(format!("no site labelled `{label}`")))?,
        None => &c.spin.sites[0],
    };
    let sys = c.system(site)?;
    let fields = field_grid(
        a.b_min.unwrap_or(c.experiment.b_min),
        a.b_max.unwrap_or(c.experiment.b_max),
        a.points,
    )?;
    let sweep = level_sweep(&sys, &direction(&c), &fields);
    if sweep.min_overlap < 0.5 {
        log::warn!("level tracking overlap fell to {:.3}; refine --points", sweep.min_overlap);
    }
    let dim = sys.dimension();
    let mut header = vec!["field_t".to_string()];
    header.extend((0..dim).map(|i| format!("level_{i:02}_hz")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = sweep.fields.iter().zip(&sweep.energies).map(|(b, e)| {
        std::iter::once(num(*b)).chain(e.iter().map(|v| num(*v))).collect()
    });
    ctx.out.csv("levels.csv", &header, rows)
}

fn edfs_params(c: &RunConfig) -> EdfsParams {
    let mut p = EdfsParams::new(c.experiment.f_probe, EdfsParams::bandwidth_for_pulse(c.experiment.pulse_length));
    p.temperature = Some(c.experiment.temperature);
    p
}

fn edfs_cmd(ctx: &mut Context, a: &crate::EdfsArgs) -> Result<(), CliError> {
    let c = ctx.config()?.clone();
    let n = a.orientations.unwrap_or(c.simulation.orientations);
    let orientations = if a.quasi_random {
        OrientationSet::quasi_random(n, ctx.require_seed()?)?
    } else {
        OrientationSet::grid(n)?
    };
    let fields = field_grid(c.experiment.b_min, c.experiment.b_max, a.points)?;
    let spectrum = edfs(&c.sites()?, &fields, &orientations, &edfs_params(&c))?;
    let rows = spectrum
        .fields
        .iter()
        .zip(&spectrum.amplitude)
        .map(|(b, v)| vec![num(*b), num(*v)]);
    ctx.out.csv("edfs.csv", &["field_t", "amplitude"], rows)?;
    if !spectrum.branches.is_empty() {
        let rows = spectrum
            .branches
            .iter()
            .map(|b| vec![b.label.clone(), num(b.b_min), num(b.b_max)]);
        ctx.out.csv("branches.csv", &["label", "b_min_t", "b_max_t"], rows)?;
    }
    Ok(())
}

fn transitions(ctx: &mut Context, a: &crate::TransitionsArgs) -> Result<(), CliError> {
    let c = ctx.config()?.clone();
    let b = a.field.unwrap_or(c.experiment.field);
    let field = FieldPoint::new(b, c.experiment.direction)?;
    let window = a
        .window
        .unwrap_or_else(|| EdfsParams::bandwidth_for_pulse(c.experiment.pulse_length));
    let query = TransitionQuery::new(c.experiment.f_probe, window)?.temperature(c.experiment.temperature);
    let mut rows = Vec::new();
    for site in &c.spin.sites {
        for t in find_transitions(&c.system(site)?, &field, &query)? {
            rows.push(vec![
                site.label.clone(),
                t.level_lo.to_string(),
                t.level_hi.to_string(),
                num(t.frequency),
                num(t.de_db),
                num(t.g_eff),
                num(t.drive_strength),
                t.thermal_weight.map(num).unwrap_or_default(),
                t.sensitivity_flagged.to_string(),
            ]);
        }
    }
    if rows.is_empty() {
        log::warn!("no transition within {window:.3e} Hz of the probe at {b} T");
    }
    ctx.out.csv(
        "transitions.csv",
        &[
            "site",
            "level_lo",
            "level_hi",
            "frequency_hz",
            "de_db_hz_per_t",
            "g_eff",
            "drive_strength",
            "thermal_weight",
            "sensitivity_flagged",
        ],
        rows,
    )
}

fn rabi(ctx: &mut Context, a: &crate::RabiArgs) -> Result<(), CliError> {
    let c = ctx.config()?.clone();
    if a.points < 2 || !(a.max_length > 0.0) {
        return Err(usage("--points must be >= 2 and --max-length positive"));
    }
    let lengths: Vec<f64> = (0..a.points)
        .map(|k| a.max_length * k as f64 / (a.points - 1) as f64)
        .collect();
    let curve = kramers_core::sequence::rabi_nutation(a.g_transverse, c.experiment.b1, &lengths)?;
    let rows = curve
        .pulse_lengths
        .iter()
        .zip(&curve.amplitude)
        .map(|(t, v)| vec![num(*t), num(*v)]);
    ctx.out.csv("rabi.csv", &["pulse_length_s", "amplitude"], rows)?;
    ctx.out
        .csv("rabi_summary.csv", &["rabi_frequency_hz"], [vec![num(curve.frequency)]])
}

fn build_sequence(
    name: SequenceName,
    t_sep: f64,
    pulses: usize,
    table: Option<&PathBuf>,
    min_sep: f64,
) -> Result<PulseSequence, CliError> {
    let kind = match name {
        SequenceName::Hahn => SequenceKind::Hahn { tau: t_sep / 2.0 },
        SequenceName::Cpmg => SequenceKind::Cpmg { n: pulses, t_sep },
        SequenceName::Xy8 => SequenceKind::Xy8 { blocks: pulses, t_sep },
        SequenceName::Table => {
            let path = table.ok_or_else(|| usage("--sequence table needs --table <path>"))?;
            let seq = read_table(BufReader::new(File::open(path)?))?;
            seq.check_separation(min_sep)?;
            return Ok(seq);
        }
    };
    Ok(make_sequence(&kind, min_sep)?)
}

fn min_separation(ctx: &Context) -> f64 {
    ctx.config
        .as_ref()
        .map(|c| c.experiment.min_separation)
        .unwrap_or(kramers_core::sequence::DEFAULT_MIN_SEPARATION)
}

fn toggling_rows(seq: &PulseSequence) -> Vec<Vec<String>> {
    let tf = toggling_frame(seq);
    let ratio = match tf.ratio() {
        Some(r) if r.is_infinite() => "inf".to_string(),
        Some(r) => num(r),
        None => String::new(),
    };
    vec![vec![
        seq.label().to_string(),
        seq.pulses().len().to_string(),
        num(seq.total_time()),
        num(tf.disorder_score),
        num(tf.zz_score),
        num(tf.flip_flop_score),
        tf.disorder_windows.to_string(),
        tf.interaction_windows.to_string(),
        ratio,
        tf.anisotropic_caveat.to_string(),
    ]]
}

const TOGGLING_HEADER: [&str; 10] = [
    "label",
    "pulses",
    "total_time_s",
    "disorder_score",
    "zz_score",
    "flip_flop_score",
    "disorder_windows",
    "interaction_windows",
    "ratio",
    "anisotropic_caveat",
];

fn filter(ctx: &mut Context, a: &crate::FilterArgs) -> Result<(), CliError> {
    let seq = build_sequence(a.sequence, a.t_sep, a.pulses, a.table.as_ref(), min_separation(ctx))?;
    let ff = filter_function(&seq, &default_grid(&seq));
    let rows = ff
        .frequencies
        .iter()
        .zip(&ff.weight)
        .map(|(f, w)| vec![num(*f), num(*w)]);
    ctx.out.csv("filter.csv", &["frequency_hz", "weight_s2"], rows)?;
    let mut summary = toggling_rows(&seq);
    summary[0].push(num(center_frequency(&seq)));
    let mut header = TOGGLING_HEADER.to_vec();
    header.push("center_frequency_hz");
    ctx.out.csv("sequence_summary.csv", &header, summary)
}

fn ratio(ctx: &mut Context, a: &crate::RatioArgs) -> Result<(), CliError> {
    let min_sep = min_separation(ctx);
    let seq = generate_ratio_sequence(a.ratio, a.spacing.unwrap_or(min_sep), a.budget, min_sep)?;
    let mut table = Vec::new();
    write_table(&seq, &mut table)?;
    ctx.out.bytes("sequence.txt", &table)?;
    ctx.out.csv("sequence_summary.csv", &TOGGLING_HEADER, toggling_rows(&seq))
}

fn simulate_decay(ctx: &mut Context, a: &crate::DecayArgs) -> Result<(), CliError> {
    let c = ctx.config()?.clone();
    let seed = ctx.require_seed()?;
    if a.points == 0 || !(a.t_max > 0.0) {
        return Err(usage("--points must be positive and --t-max positive"));
    }
    // a template that Stretch rescales to each total time
    let base = build_sequence(a.sequence, a.t_max / a.pulses.max(1) as f64, a.pulses, None, 0.0)?;
    let times: Vec<f64> = (1..=a.points).map(|k| a.t_max * k as f64 / a.points as f64).collect();
    let bath = BathSpec::new(c.relaxation.rate, c.relaxation.gamma_sd)?.with_spins(c.simulation.bath_spins);
    let trials = a.trials.unwrap_or(c.simulation.trials);
    let mc = sudden_jump_monte_carlo(&bath, &base, &times, TimeScaling::Stretch, trials, seed)?;
    let sigma: Vec<f64> = mc.std_error.iter().map(|s| s.max(1e-12)).collect();
    let trace = DecayTrace::new(mc.trace.abscissa().to_vec(), mc.trace.amplitude().to_vec(), Some(sigma))?;
    let mut buf = Vec::new();
    trace.to_csv(&mut buf)?;
    ctx.out.bytes("decay.csv", &buf)
}

fn read_trace(path: &PathBuf) -> Result<DecayTrace, CliError> {
    Ok(DecayTrace::from_csv(BufReader::new(File::open(path)?))?)
}

fn fit(ctx: &mut Context, a: &crate::FitArgs) -> Result<(), CliError> {
    let trace = read_trace(&a.input)?;
    let result: FitResult = match a.kind {
        FitKind::Hahn => fit_hahn_decay(&trace, &HahnOptions { fixed_n: a.fixed_n })?,
        FitKind::Recovery => fit_saturation_recovery(&trace)?,
        FitKind::T1 => fit_t1_temperature(&trace, ctx.config()?.experiment.f_probe)?,
        FitKind::T2 => {
            let c = ctx.config()?;
            fit_t2_temperature(&trace, &c.t1_params()?, c.relaxation.id_rate, c.experiment.field)?
        }
        FitKind::Sd => fit_spectral_diffusion(&trace)?,
    };
    let text = result.to_text();
    print!("{text}");
    ctx.out.bytes("fit.txt", text.as_bytes())?;
    let mut json = serde_json::to_vec_pretty(&result)?;
    json.push(b'\n');
    ctx.out.bytes("fit.json", &json)?;
    let rows = (0..result.names.len()).map(|i| {
        vec![
            result.names[i].clone(),
            num(result.values[i]),
            num(result.uncertainties[i]),
            result.fixed[i].to_string(),
        ]
    });
    ctx.out.csv("fit.csv", &["name", "value", "uncertainty", "fixed"], rows)
}

fn psd(ctx: &mut Context, a: &crate::PsdArgs) -> Result<(), CliError> {
    let min_sep = min_separation(ctx);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(BufReader::new(File::open(&a.runs)?));
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "pulses" || header[1] != "t_sep_s" || header[2] != "t2_s" {
        return Err(kramers_core::Error::Parse {
            line: 1,
            reason: "expected header `pulses,t_sep_s,t2_s[,label]`".into(),
        }
        .into());
    }
    let mut runs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| -> Result<&str, CliError> {
            rec.get(k).ok_or_else(|| {
                kramers_core::Error::Parse {
                    line,
                    reason: "missing column".into(),
                }
                .into()
            })
        };
        let parse_err = |s: &str| -> CliError {
            kramers_core::Error::Parse {
                line,
                reason: format!("`{s}` is not a number"),
            }
            .into()
        };
        let n: usize = field(0)?.parse().map_err(|_| parse_err(field(0).unwrap_or("")))?;
        let t_sep: f64 = field(1)?.parse().map_err(|_| parse_err(field(1).unwrap_or("")))?;
        let t2: f64 = field(2)?.parse().map_err(|_| parse_err(field(2).unwrap_or("")))?;
        let label = rec.get(3).map(str::to_string).unwrap_or_else(|| format!("run{}", i + 1));
        runs.push(CpmgRun {
            sequence: make_sequence(&SequenceKind::Cpmg { n, t_sep }, min_sep)?,
            t2,
            label,
        });
    }
    let spectrum = reconstruct_psd(&runs)?;
    let mut buf = Vec::new();
    spectrum.to_csv(&mut buf)?;
    ctx.out.bytes("psd.csv", &buf)?;
    if let Some(g) = a.g {
        let field = spectrum.field_psd(g)?;
        let rows = spectrum
            .frequencies
            .iter()
            .zip(&field)
            .map(|(f, s)| vec![num(*f), num(*s)]);
        ctx.out.csv("psd_field.csv", &["frequency_hz", "s_b_t2_s"], rows)?;
    }
    Ok(())
}

fn predict_t2(ctx: &mut Context, a: &crate::PredictArgs) -> Result<(), CliError> {
    let c = ctx.config()?.clone();
    if a.points < 2 || !(a.t_min > 0.0 && a.t_max > a.t_min) {
        return Err(usage("need --points >= 2 and 0 < --t-min < --t-max"));
    }
    let p = c.t1_params()?;
    let r = &c.relaxation;
    let t2_id = if r.id_rate > 0.0 { 1.0 / r.id_rate } else { f64::INFINITY };
    let mut rows = Vec::new();
    for k in 0..a.points {
        let temp = a.t_min * (a.t_max / a.t_min).powf(k as f64 / (a.points - 1) as f64);
        let rate = t1_rate(temp, &p)?;
        let gsd = gamma_sd(temp, c.experiment.field, r.gamma_max, r.g_env)?;
        // a fully polarized bath has no spectral diffusion
        let sd = if gsd > 0.0 { t2_sd(gsd, rate)? } else { f64::INFINITY };
        let total = t2_total(sd, t2_id, 1.0 / rate)?;
        rows.push(vec![num(temp), num(1.0 / rate), num(rate), num(gsd), num(sd), num(total)]);
    }
    ctx.out.csv(
        "predict_t2.csv",
        &["temperature_k", "t1_s", "flip_rate_hz", "gamma_sd_hz", "t2_sd_s", "t2_s"],
        rows,
    )
}
