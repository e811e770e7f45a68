use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uvtex::check::{format_table, run_checks, Fault};
use uvtex::config::PipelineConfig;
use uvtex::synthetic::{face_scene, write_scene, CapSpec, SceneSpec};
use uvtex::pipeline::{cmd_metrics, cmd_pseudo_uv, cmd_render, load_image, StageError};
use uvtex::uv::DEFAULT_RESOLUTION;
use uvtex::{Error, Planar};

const INPUT_ERROR: u8 = 1;
const NUMERICAL_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "uvtex", version, about = "Pseudo ground-truth UV texture maps for 3D faces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build UV_gt, UV_bfm and UV_bl from an image, a model and fitted parameters.
    PseudoUv {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render a UV map onto the configured shape.
    Render {
        #[command(flatten)]
        config: ConfigArgs,
        /// UV map: combined .pfm, or .png with a NAME_valid.png next to it.
        #[arg(long)]
        uv: PathBuf,
        /// Parameter file whose pose replaces the configured one.
        #[arg(long)]
        pose: Option<PathBuf>,
        /// Output image (.png or .pfm); validity goes to NAME_valid.png.
        #[arg(long)]
        output: PathBuf,
        /// Defaults to the width of image_path, or 256.
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
    },
    /// Print L1, SSIM and cosine similarity of two images.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        /// Feature vector files (one value per line); both or neither.
        #[arg(long = "features-a", requires = "features_b")]
        features_a: Option<PathBuf>,
        #[arg(long = "features-b", requires = "features_a")]
        features_b: Option<PathBuf>,
        /// Also write the metrics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write a synthetic scene (model.uvmm, image.pfm, params.txt) into a directory.
    Scene {
        dir: PathBuf,
        #[arg(long, default_value_t = 128)]
        size: usize,
        /// Icosphere subdivision level.
        #[arg(long, default_value_t = 4)]
        level: usize,
        /// Rotation about the vertical axis, radians.
        #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
        yaw: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Run the gradient, adjoint and oracle checks.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Corrupt one component: shade-backward, grid-sample, texture-fit, poisson or loss-gradient.
        #[arg(long)]
        fault: Option<String>,
    },
}

/// Every configuration key as a flag of the same name.
#[derive(Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "model_path", alias = "model-path")]
    model_path: Option<String>,
    #[arg(long = "image_path", alias = "image-path")]
    image_path: Option<String>,
    #[arg(long = "params_path", alias = "params-path")]
    params_path: Option<String>,
    #[arg(long = "output_dir", alias = "output-dir")]
    output_dir: Option<String>,
    #[arg(long = "uv_resolution", alias = "uv-resolution")]
    uv_resolution: Option<String>,
    /// Texels, or `auto` for 2% of the image width.
    #[arg(long = "erosion_radius", alias = "erosion-radius")]
    erosion_radius: Option<String>,
    /// Ridge weight, or `auto`.
    #[arg(long = "lambda_fit", alias = "lambda-fit")]
    lambda_fit: Option<String>,
    #[arg(long = "use_mean", alias = "use-mean")]
    use_mean: Option<String>,
    #[arg(long = "lambda_tv", alias = "lambda-tv")]
    lambda_tv: Option<String>,
    #[arg(long = "weight_adv", alias = "weight-adv")]
    weight_adv: Option<String>,
    #[arg(long = "weight_sym", alias = "weight-sym")]
    weight_sym: Option<String>,
    #[arg(long = "weight_id", alias = "weight-id")]
    weight_id: Option<String>,
    #[arg(long = "weight_tv", alias = "weight-tv")]
    weight_tv: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let flags = [
            ("model_path", &self.model_path),
            ("image_path", &self.image_path),
            ("params_path", &self.params_path),
            ("output_dir", &self.output_dir),
            ("uv_resolution", &self.uv_resolution),
            ("erosion_radius", &self.erosion_radius),
            ("lambda_fit", &self.lambda_fit),
            ("use_mean", &self.use_mean),
            ("lambda_tv", &self.lambda_tv),
            ("weight_adv", &self.weight_adv),
            ("weight_sym", &self.weight_sym),
            ("weight_id", &self.weight_id),
            ("weight_tv", &self.weight_tv),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn fail(err: &StageError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn config_error(err: &Error) -> ExitCode {
    eprintln!("error: config failed: {err}");
    ExitCode::from(INPUT_ERROR)
}

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::PseudoUv { config } => {
            let config = match config.resolve() {
                Ok(c) => c,
                Err(e) => return config_error(&e),
            };
            match cmd_pseudo_uv(&config) {
                Ok(report) => {
                    print!("{}", report.to_text());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Render {
            config,
            uv,
            pose,
            output,
            width,
            height,
        } => {
            let config = match config.resolve() {
                Ok(c) => c,
                Err(e) => return config_error(&e),
            };
            let reference = if config.image_path.as_os_str().is_empty() {
                None
            } else {
                match load_image(&config.image_path) {
                    Ok(img) => Some((img.width(), img.height())),
                    Err(e) => {
                        eprintln!("error: load_image failed: {e}");
                        return ExitCode::from(INPUT_ERROR);
                    }
                }
            };
            let (w, h) = reference.unwrap_or((DEFAULT_RESOLUTION, DEFAULT_RESOLUTION));
            let size = (width.unwrap_or(w), height.unwrap_or(h));
            match cmd_render(&config, &uv, pose.as_deref(), size, &output) {
                Ok(image) => {
                    let valid = image.mask().map_or(0, |m| m.iter().filter(|&&v| v).count());
                    println!("width = {}\nheight = {}\nvalid_pixels = {valid}", size.0, size.1);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Metrics {
            a,
            b,
            features_a,
            features_b,
            json,
        } => {
            let features = features_a.as_deref().zip(features_b.as_deref());
            match cmd_metrics(&a, &b, features) {
                Ok(report) => {
                    print!("{}", report.to_text());
                    if let Some(path) = json {
                        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
                        if let Err(e) = std::fs::write(&path, text) {
                            eprintln!("error: write_outputs failed: {}: {e}", path.display());
                            return ExitCode::from(INPUT_ERROR);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Scene {
            dir,
            size,
            level,
            yaw,
            seed,
        } => {
            let spec = SceneSpec {
                cap: CapSpec {
                    level,
                    seed,
                    ..CapSpec::default()
                },
                width: size,
                height: size,
                yaw,
                ..SceneSpec::default()
            };
            match face_scene(&spec).and_then(|scene| write_scene(&scene, &dir)) {
                Ok(paths) => {
                    println!(
                        "model_path = {}\nimage_path = {}\nparams_path = {}",
                        paths.model.display(),
                        paths.image.display(),
                        paths.params.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: scene failed: {e}");
                    ExitCode::from(INPUT_ERROR)
                }
            }
        }
        Command::Check { seed, fault } => {
            let fault = match fault.as_deref().map(str::parse::<Fault>).transpose() {
                Ok(f) => f,
                Err(e) => return config_error(&e),
            };
            match run_checks(seed, fault) {
                Ok(results) => {
                    print!("{}", format_table(&results));
                    if results.iter().all(|r| r.passed) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(NUMERICAL_FAILURE)
                    }
                }
                Err(e) => {
                    eprintln!("error: check failed: {e}");
                    ExitCode::from(NUMERICAL_FAILURE)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { INPUT_ERROR } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
