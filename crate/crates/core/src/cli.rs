//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit status:
//!
//! | status | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | usage error |
//! | 2 | IO error (missing, unreadable or malformed files) |
//! | 3 | validation failure (bad parameters, unpaired dataset, failed gradcheck) |

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chroma::shadow_free_chromaticity;
use crate::error::{Error, Result};
use crate::eval::{run_dataset, ColorSpace, DatasetLayout, Protocol, Resize};
use crate::features::standin_features;
use crate::gradcheck::{check_all, DEFAULT_TRIALS};
use crate::image::FeatureMap;
use crate::io::{read_image, read_mask, write_image, write_mask, write_plane};
use crate::losses::{
    adv_loss_removal, adv_loss_synthesis, domcls_loss_discriminator, domcls_loss_generator,
    loss_consistency, loss_feature, loss_identity, loss_report, DomainScore, LossTerms, LossWeights,
};
use crate::mask::{boundary, loss_smooth, shadow_mask, DEFAULT_TAU};
use crate::synth::{generate, SceneParams};
use crate::tensor::{read_tensor, write_tensor_file, Tensor};
use crate::TOOL_VERSION;

/// Penumbra width used by `synth --soft`, in pixels.
pub const SOFT_PENUMBRA_SIGMA: f64 = 3.0;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "shadowphys", version, about = "Physics-based shadow analysis toolkit")]
struct Cli {
    /// Base seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: all logical cores).
    #[arg(long, global = true, env = "SHADOWPHYS_THREADS")]
    threads: Option<usize>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Invariant angle, entropy profile and shadow-free chromaticity.
    Chroma(ChromaArgs),
    /// Soft shadow mask from a shadow image and a shadow-free estimate.
    Mask(MaskArgs),
    /// Affinity-weighted boundary map of a mask.
    Boundary(BoundaryArgs),
    /// Evaluates every available loss term and the weighted total.
    Losses(LossesArgs),
    /// Region-wise MAE and PSNR over a results / ground-truth directory pair.
    Eval(EvalArgs),
    /// Writes synthetic scenes with ground truth.
    Synth(SynthArgs),
    /// Verifies analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Serialize)]
struct ChromaArgs {
    input: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write sigma_phy.sptn and sigma_ent.sptn.
    #[arg(long)]
    sptn: bool,
}

#[derive(Debug, Args, Serialize)]
struct MaskArgs {
    shadow: PathBuf,
    shadow_free: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BoundaryArgs {
    mask: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write the unclamped map as boundary.sptn.
    #[arg(long)]
    sptn: bool,
}

#[derive(Debug, Args, Serialize)]
struct LossesArgs {
    /// Shadow input image.
    #[arg(long)]
    input: PathBuf,
    /// Shadow-free output of the removal generator.
    #[arg(long)]
    output: PathBuf,
    /// Features of the input (SPTN). Requires --features-out.
    #[arg(long, requires = "features_out")]
    features_in: Option<PathBuf>,
    /// Features of the output (SPTN). Requires --features-in.
    #[arg(long, requires = "features_in")]
    features_out: Option<PathBuf>,
    /// Loss weights as JSON; missing file fields are an error.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Cycle reconstruction of the input (defaults to --output).
    #[arg(long)]
    reconstruction: Option<PathBuf>,
    /// Generator output on an image already in its target domain, compared
    /// with --input (defaults to --output).
    #[arg(long)]
    identity_output: Option<PathBuf>,
    /// Classifier and discriminator scores as JSON.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Shadow inputs; stems without a mask file get an Otsu-derived mask.
    #[arg(long)]
    shadow_inputs: Option<PathBuf>,
    #[arg(long, default_value = "lab")]
    space: ColorSpace,
    #[arg(long, default_value = "256")]
    resize: Resize,
    /// JSON report path; a CSV mirror is written alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Blurred penumbrae instead of hard shadow edges.
    #[arg(long)]
    soft: bool,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    surfaces: Option<usize>,
    #[arg(long)]
    lit_temperature: Option<f64>,
    #[arg(long)]
    shadow_temperature: Option<f64>,
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
}

/// Everything that determines a run's outputs. Thread count is left out: it
/// never changes results.
fn resolved_flags(cli: &Cli) -> Value {
    json!({ "seed": cli.seed, "command": &cli.command })
}

struct Ctx {
    flags: Value,
    seed: u64,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn warn(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("warning: {}", msg.as_ref());
        }
    }

    fn write_json(&self, path: &Path, body: Value) -> Result<()> {
        let mut doc = json!({ "tool_version": TOOL_VERSION, "resolved_flags": self.flags });
        if let (Value::Object(doc), Value::Object(body)) = (&mut doc, body) {
            doc.extend(body);
        }
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Failure of a run, mapped to an exit status.
enum Failure {
    Lib(Error),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn cmd_chroma(ctx: &Ctx, a: &ChromaArgs) -> Result<()> {
    let img = read_image(&a.input)?;
    let sf = shadow_free_chromaticity(&img);
    ensure_dir(&a.out_dir)?;
    let phy = sf.physics.to_image();
    let ent = sf.entropy.to_image();
    write_image(&phy, a.out_dir.join("sigma_phy.png"))?;
    write_image(&ent, a.out_dir.join("sigma_ent.png"))?;
    if a.sptn {
        write_tensor_file(&Tensor::from(&phy), a.out_dir.join("sigma_phy.sptn"))?;
        write_tensor_file(&Tensor::from(&ent), a.out_dir.join("sigma_ent.sptn"))?;
    }
    if sf.profile.is_flat() {
        ctx.warn("entropy profile is flat; the angle is unreliable");
    }
    ctx.write_json(
        &a.out_dir.join("theta.json"),
        json!({
            "angle": sf.angle.degrees(),
            "flat": sf.profile.is_flat(),
            "lighting_offset": sf.lighting_offset,
            "profile": sf.profile.entropies,
        }),
    )?;
    ctx.say(format!("invariant angle {:.0} deg", sf.angle.degrees()));
    Ok(())
}

fn cmd_mask(ctx: &Ctx, a: &MaskArgs) -> Result<()> {
    let m = shadow_mask(&read_image(&a.shadow)?, &read_image(&a.shadow_free)?)?;
    ensure_dir(&a.out_dir)?;
    let path = a.out_dir.join("mask.png");
    write_mask(&m, &path)?;
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn cmd_boundary(ctx: &Ctx, a: &BoundaryArgs) -> Result<()> {
    let b = boundary(&read_mask(&a.mask)?, a.tau)?;
    ensure_dir(&a.out_dir)?;
    let path = a.out_dir.join("boundary.png");
    write_plane(b.as_slice(), b.height(), b.width(), &path)?;
    if a.sptn {
        let t = Tensor::new(
            vec![b.height() as u32, b.width() as u32],
            b.as_slice().iter().map(|&v| v as f32).collect(),
        )?;
        write_tensor_file(&t, a.out_dir.join("boundary.sptn"))?;
    }
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

/// Optional score lists for the classifier and discriminator terms.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scores {
    classifier_g_on_shadow: Option<Vec<f64>>,
    classifier_g_on_shadowfree: Option<Vec<f64>>,
    classifier_d_on_shadow: Option<Vec<f64>>,
    classifier_d_on_shadowfree: Option<Vec<f64>>,
    d_sf_on_real: Option<Vec<f64>>,
    d_sf_on_generated: Option<Vec<f64>>,
    d_s_on_real: Option<Vec<f64>>,
    d_s_on_generated: Option<Vec<f64>>,
}

fn domain_scores(v: &[f64]) -> Result<Vec<DomainScore>> {
    v.iter().map(|&p| DomainScore::new(p)).collect()
}

fn paired<T>(
    a: &Option<Vec<f64>>,
    b: &Option<Vec<f64>>,
    f: impl FnOnce(&[f64], &[f64]) -> Result<T>,
) -> Result<Option<T>> {
    match (a, b) {
        (Some(a), Some(b)) => f(a, b).map(Some),
        (None, None) => Ok(None),
        _ => Err(Error::InvalidInput("score lists must be given in pairs".into())),
    }
}

fn cmd_losses(ctx: &Ctx, a: &LossesArgs) -> Result<()> {
    let input = read_image(&a.input)?;
    let output = read_image(&a.output)?;
    input.same_shape(&output)?;
    let weights = match &a.weights {
        Some(p) => read_json::<LossWeights>(p)?,
        None => LossWeights::default(),
    };
    weights.validate()?;

    let chroma = shadow_free_chromaticity(&input);
    let (chroma_value, _) = crate::chroma::loss_chroma(&output, &chroma.physics)?;

    let (v_i, v_z): (FeatureMap, FeatureMap) = match (&a.features_in, &a.features_out) {
        (Some(fi), Some(fo)) => (read_tensor(fi)?, read_tensor(fo)?),
        _ => (standin_features(&input), standin_features(&output)),
    };
    let (feature, _) = loss_feature(&v_z, &v_i)?;

    let b = boundary(&shadow_mask(&input, &output)?, DEFAULT_TAU)?;
    let (smooth, _) = loss_smooth(&output, &b)?;

    let recon = a.reconstruction.as_deref().map(read_image).transpose()?;
    let (cons, _) = loss_consistency(recon.as_ref().unwrap_or(&output), &input)?;
    let iden_out = a.identity_output.as_deref().map(read_image).transpose()?;
    let (iden, _) = loss_identity(iden_out.as_ref().unwrap_or(&output), &input)?;

    let scores = a.scores.as_deref().map(read_json::<Scores>).transpose()?.unwrap_or_default();
    let terms = LossTerms {
        chroma: Some(chroma_value),
        feature: Some(feature),
        smooth: Some(smooth),
        domcls_g: paired(&scores.classifier_g_on_shadow, &scores.classifier_g_on_shadowfree, |s, f| {
            domcls_loss_generator(&domain_scores(s)?, &domain_scores(f)?)
        })?,
        domcls_d: paired(&scores.classifier_d_on_shadow, &scores.classifier_d_on_shadowfree, |s, f| {
            domcls_loss_discriminator(&domain_scores(s)?, &domain_scores(f)?)
        })?,
        adv_s_to_sf: paired(&scores.d_sf_on_real, &scores.d_sf_on_generated, adv_loss_removal)?,
        adv_sf_to_s: paired(&scores.d_s_on_real, &scores.d_s_on_generated, adv_loss_synthesis)?,
        cons_s: Some(cons),
        cons_sf: None,
        iden_s: Some(iden),
        iden_sf: None,
    };
    let report = loss_report(terms, weights)?;
    ensure_dir(&a.out_dir)?;
    ctx.write_json(
        &a.out_dir.join("loss_report.json"),
        json!({
            "features": if a.features_in.is_some() { "sptn" } else { "standin" },
            "angle": chroma.angle.degrees(),
            "report": report,
        }),
    )?;
    ctx.say(format!("total loss {:.6}", report.total));
    Ok(())
}

fn csv_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> std::result::Result<(), Failure> {
    let layout = DatasetLayout {
        results: a.results.clone(),
        gt: a.gt.clone(),
        masks: a.masks.clone(),
        shadow_inputs: a.shadow_inputs.clone(),
    };
    let protocol = Protocol {
        space: a.space,
        resize: a.resize,
    };
    let report = run_dataset(&layout, protocol)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    ctx.write_json(&a.out, serde_json::to_value(&report).map_err(Error::from)?)?;
    let csv = csv_path(&a.out);
    fs::write(&csv, report.to_csv()?).map_err(|e| Error::io(&csv, e))?;
    let agg = &report.aggregate;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    ctx.say(format!(
        "{} images  all {:.2}  shadow {}  non-shadow {}  psnr {:.2}",
        report.records.len(),
        agg.mae_all,
        fmt(agg.mae_shadow),
        fmt(agg.mae_nonshadow),
        agg.psnr
    ));
    if !report.unpaired.is_empty() {
        for s in &report.unpaired {
            eprintln!("unpaired: {s}");
        }
        return Err(Failure::Validation(format!("{} unpaired stems", report.unpaired.len())));
    }
    Ok(())
}

fn scene_params(ctx: &Ctx, a: &SynthArgs, index: usize) -> SceneParams {
    let d = SceneParams::default();
    SceneParams {
        width: a.width.unwrap_or(d.width),
        height: a.height.unwrap_or(d.height),
        n_surfaces: a.surfaces.unwrap_or(d.n_surfaces),
        lit_temperature: a.lit_temperature.unwrap_or(d.lit_temperature),
        shadow_temperature: a.shadow_temperature.unwrap_or(d.shadow_temperature),
        shadow_strength: a.strength.unwrap_or(d.shadow_strength),
        penumbra_sigma: if a.soft { SOFT_PENUMBRA_SIGMA } else { 0.0 },
        noise_sigma: a.noise.unwrap_or(d.noise_sigma),
        seed: ctx.seed.wrapping_add(index as u64),
    }
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Error::InvalidParameter("--n must be at least 1".into()));
    }
    let scenes = (0..a.n)
        .map(|i| generate(&scene_params(ctx, a, i)))
        .collect::<Result<Vec<_>>>()?;
    for (i, scene) in scenes.iter().enumerate() {
        let dir = if a.n == 1 {
            a.out_dir.clone()
        } else {
            a.out_dir.join(format!("scene_{i:04}"))
        };
        ensure_dir(&dir)?;
        write_image(&scene.shadow_image, dir.join("shadow.png"))?;
        write_image(&scene.shadowfree_image, dir.join("shadowfree.png"))?;
        write_mask(&scene.gt_mask, dir.join("mask.png"))?;
        if scene.degenerate {
            ctx.warn(format!("scene {i}: illuminants share a chromaticity; gt_angle is arbitrary"));
        }
        ctx.write_json(
            &dir.join("meta.json"),
            json!({
                "gt_angle": scene.gt_angle.degrees(),
                "degenerate": scene.degenerate,
                "seed": scene.seed,
                "params": scene.params,
            }),
        )?;
    }
    ctx.say(format!("wrote {} scene(s) to {}", a.n, a.out_dir.display()));
    Ok(())
}

fn cmd_gradcheck(ctx: &Ctx, a: &GradcheckArgs) -> std::result::Result<(), Failure> {
    if a.trials == 0 {
        return Err(Error::InvalidParameter("--trials must be at least 1".into()).into());
    }
    let checks = check_all(a.trials, ctx.seed);
    for c in &checks {
        // Results go to stdout even with --quiet: they are the command's output.
        println!(
            "{:<12} trials {:>4}  max rel error {:.3e}  {}",
            c.loss,
            c.trials,
            c.max_rel_error,
            if c.passed() { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.loss).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn dispatch(cli: &Cli) -> std::result::Result<(), Failure> {
    let ctx = Ctx {
        flags: resolved_flags(cli),
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Chroma(a) => cmd_chroma(&ctx, a)?,
        Command::Mask(a) => cmd_mask(&ctx, a)?,
        Command::Boundary(a) => cmd_boundary(&ctx, a)?,
        Command::Losses(a) => cmd_losses(&ctx, a)?,
        Command::Eval(a) => cmd_eval(&ctx, a)?,
        Command::Synth(a) => cmd_synth(&ctx, a)?,
        Command::Gradcheck(a) => cmd_gradcheck(&ctx, a)?,
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the selected
/// subcommand. Returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            EXIT_VALIDATION
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_VALIDATION
            }
        }
    }
}
