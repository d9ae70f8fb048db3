use std::fmt::Write as _;

use clap::ArgMatches;
use srs_core::dynamics::{iterate_activation, output_landscape, to_pgm, GridSpec, PgmFormat};
use srs_core::gradcheck::{gradient_suite, GradCheckConfig};
use srs_core::moments::{mc_oracle, moments_table};
use srs_core::quadrature::{QuadratureConfig, QuadratureRule};
use srs_core::train::{
    gen_toy, load_fashion_mnist, run_ablation, run_experiment, AblationGrid, DatasetSplit, TrainConfig,
};
use srs_core::{srs_shape, Activation, ActivationKind, MomentResult, Scalar};

use crate::manifest::Manifest;
use crate::{
    AblateArgs, Cli, CliError, Command, GradcheckArgs, IterateArgs, LandscapeArgs, MomentsArgs, PgmKind, Precision,
    ShapeArgs, TrainArgs,
};

pub fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Moments(_) => "moments",
        Command::Landscape(_) => "landscape",
        Command::Iterate(_) => "iterate",
        Command::Train(_) => "train",
        Command::Ablate(_) => "ablate",
        Command::Gradcheck(_) => "gradcheck",
        Command::Shape(_) => "shape",
    }
}

pub fn run(cli: &Cli, matches: &ArgMatches) -> Result<(), CliError> {
    let mut m = Manifest::new(cli, matches, name(&cli.command))?;
    match &cli.command {
        Command::Moments(a) => moments(a, cli.seed, &mut m)?,
        Command::Landscape(a) => landscape(a, cli.seed, &mut m)?,
        Command::Iterate(a) => iterate(a, cli.seed, &mut m)?,
        Command::Train(a) => train(a, cli.seed, &mut m)?,
        Command::Ablate(a) => ablate(a, cli.seed, &mut m)?,
        Command::Gradcheck(a) => gradcheck(a, cli.seed, &mut m)?,
        Command::Shape(a) => shape(a, &mut m)?,
    }
    let path = m.finish()?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn moments(a: &MomentsArgs, seed: u64, m: &mut Manifest) -> Result<(), CliError> {
    let rule: QuadratureRule = a
        .rule
        .parse()
        .map_err(|e: srs_core::Error| CliError::Validation(format!("--rule: {e}")))?;
    let cfg = QuadratureConfig {
        truncation: a.truncation,
        panels: a.panels as usize,
        rule,
    };
    let table = moments_table::<f64>(&a.alphas, &a.betas, &cfg)?;
    m.write("moments.csv", table.to_csv())?;
    println!(
        "{} cells, {} divergent",
        a.alphas.len() * a.betas.len(),
        table.divergent_count()
    );

    if let Some(n) = a.mc_samples {
        let mut s = String::from("alpha,beta,quad_mean,quad_var,mc_mean,mc_mean_se,mc_var,mc_var_se\n");
        for (bi, &beta) in a.betas.iter().enumerate() {
            for (ai, &alpha) in a.alphas.iter().enumerate() {
                if let MomentResult::Convergent { mean, variance, .. } = table.get(bi, ai) {
                    let act = Activation::srs(alpha, beta)?;
                    let mc = mc_oracle(&act, n, seed)?;
                    writeln!(
                        s,
                        "{alpha},{beta},{mean},{variance},{},{},{},{}",
                        mc.mean, mc.stderr, mc.variance, mc.variance_stderr
                    )
                    .unwrap();
                }
            }
        }
        m.write("moments_mc.csv", s)?;
    }
    Ok(())
}

fn with_srs(kind: ActivationKind, alpha: f64, beta: f64) -> Result<Activation<f64>, CliError> {
    Ok(if kind == ActivationKind::Srs {
        Activation::srs(alpha, beta)?
    } else {
        Activation::new(kind)
    })
}

fn landscape(a: &LandscapeArgs, seed: u64, m: &mut Manifest) -> Result<(), CliError> {
    let spec = GridSpec {
        height: a.height as usize,
        width: a.width as usize,
        extent: a.extent,
    };
    let format = match a.pgm {
        PgmKind::Plain => PgmFormat::Plain,
        PgmKind::Raw => PgmFormat::Raw,
    };
    let mut summary = String::from("activation,seed,roughness\n");
    for &kind in &a.activations {
        let act = with_srs(kind, a.srs_alpha, a.srs_beta)?;
        for s in seed..seed + a.runs {
            let ls = output_landscape(&act, &spec, s)?;
            let rough = ls.roughness()?;
            writeln!(summary, "{kind},{s},{rough}").unwrap();
            m.write(&format!("landscape_{kind}_seed{s}.csv"), ls.to_csv())?;
            m.write(&format!("landscape_{kind}_seed{s}.pgm"), to_pgm(&ls.grid, format))?;
        }
    }
    print!("{summary}");
    m.write("roughness.csv", summary)
}

fn iterate(a: &IterateArgs, seed: u64, m: &mut Manifest) -> Result<(), CliError> {
    let mut summary = String::from("activation,seed,late_mean_abs_dx\n");
    for &kind in &a.activations {
        let act = with_srs(kind, a.srs_alpha, a.srs_beta)?;
        for s in seed..seed + a.runs {
            let t = iterate_activation(&act, a.iters as usize, s)?;
            let late_start = (a.iters as usize).saturating_sub(10).max(1);
            writeln!(summary, "{kind},{s},{}", t.mean_abs_dx(late_start, a.iters as usize)).unwrap();
            m.write(&format!("trajectory_{kind}_seed{s}.csv"), t.to_csv())?;
        }
    }
    print!("{summary}");
    m.write("trajectory_summary.csv", summary)
}

fn train_config(a: &TrainArgs, seed: u64) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        activation: a.activation,
        lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        batch_size: a.batch_size as usize,
        steps: a.steps as usize,
        init: a.init,
        use_bn: a.use_bn,
        seed,
        srs_alpha: a.srs_alpha,
        srs_beta: a.srs_beta,
        clamp_floor: a.clamp_floor,
        hidden: a.hidden.clone(),
        dropout: a.dropout,
        swish_trainable: a.swish_trainable,
        log_every: a.log_every as usize,
        eval_every: a.eval_every as usize,
    };
    cfg.validate()?;
    if cfg.activation == ActivationKind::Srs {
        srs_shape(cfg.srs_alpha, cfg.srs_beta)
            .map_err(|e| CliError::Validation(format!("--srs-alpha/--srs-beta: {e}")))?;
    }
    Ok(cfg)
}

fn load_data(a: &TrainArgs, seed: u64) -> Result<(DatasetSplit<f64>, DatasetSplit<f64>), CliError> {
    let (train, test) = match a.toy {
        Some(kind) => (
            gen_toy(kind, a.toy_n as usize, a.toy_noise, seed)?,
            gen_toy(kind, a.toy_n as usize, a.toy_noise, seed.wrapping_add(0x7E57))?,
        ),
        None => {
            load_fashion_mnist(&a.data).map_err(|e| CliError::Runtime(format!("--data {}: {e}", a.data.display())))?
        }
    };
    let limit = |split: DatasetSplit<f64>, n: usize| if n == 0 { split } else { split.take(n) };
    Ok((limit(train, a.train_limit), limit(test, a.test_limit)))
}

fn train(a: &TrainArgs, seed: u64, m: &mut Manifest) -> Result<(), CliError> {
    let cfg = train_config(a, seed)?;
    let (tr, te) = load_data(a, seed)?;
    m.note("train_examples", tr.len());
    m.note("test_examples", te.len());
    let log = match a.precision {
        Precision::F64 => run_experiment(&cfg, &tr, &te)?,
        Precision::F32 => run_experiment(&cfg, &tr.cast::<f32>(), &te.cast::<f32>())?,
    };
    m.write("metrics.csv", log.to_csv())?;
    println!(
        "final test error {:.4}{}",
        log.final_test_error,
        if log.converged() { "" } else { " (did not converge)" }
    );
    for (k, (alpha, beta)) in log.final_srs_params.iter().enumerate() {
        println!("layer {} srs alpha {alpha:.5} beta {beta:.5}", k + 1);
    }
    Ok(())
}

fn ablate(a: &AblateArgs, seed: u64, m: &mut Manifest) -> Result<(), CliError> {
    let base = train_config(&a.base, seed)?;
    let grid = AblationGrid {
        base,
        activations: a.activations.clone(),
        lrs: a.lrs.clone(),
        use_bn: a.bn_modes.clone(),
        inits: a.inits.clone(),
        seeds: a.seeds.clone(),
    };
    grid.validate()?;
    let (tr, te) = load_data(&a.base, seed)?;
    m.note("train_examples", tr.len());
    m.note("test_examples", te.len());
    let table = match a.base.precision {
        Precision::F64 => run_ablation(&grid, &tr, &te)?,
        Precision::F32 => run_ablation(&grid, &tr.cast::<f32>(), &te.cast::<f32>())?,
    };
    let csv = table.to_csv();
    print!("{csv}");
    m.write("ablation.csv", csv)?;
    m.write("ablation_runs.csv", table.runs_csv())
}

fn gradcheck(a: &GradcheckArgs, seed: u64, m: &mut Manifest) -> Result<(), CliError> {
    let cfg = GradCheckConfig {
        step: a.step,
        samples_per_tensor: a.samples as usize,
        seed,
    };
    let cases = gradient_suite(a.batches as usize, seed, &a.hidden, &cfg)?;
    let mut s = String::from("case,checked,skipped_kinks,max_rel_error\n");
    let mut worst = 0.0f64;
    for c in &cases {
        writeln!(
            s,
            "{},{},{},{:e}",
            c.name, c.report.checked, c.report.skipped_kinks, c.report.max_rel_error
        )
        .unwrap();
        worst = worst.max(c.report.max_rel_error);
    }
    print!("{s}");
    println!("max relative error {worst:e}");
    m.write("gradcheck.csv", s)?;
    if !(worst <= a.tolerance) {
        return Err(CliError::Runtime(format!(
            "max relative error {worst:e} exceeds {:e}",
            a.tolerance
        )));
    }
    Ok(())
}

fn shape(a: &ShapeArgs, m: &mut Manifest) -> Result<(), CliError> {
    let s = srs_shape(a.alpha, a.beta).map_err(|e| CliError::Validation(format!("--alpha/--beta: {e}")))?;
    let text = format!(
        "alpha {}\nbeta {}\nmin_location {}\nmin_value {}\nsupremum {}\n",
        a.alpha,
        a.beta,
        s.min_location.as_f64(),
        s.min_value.as_f64(),
        s.supremum.as_f64()
    );
    print!("{text}");
    m.write("shape.txt", text)
}
