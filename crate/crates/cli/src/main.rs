use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fidtrack_cli::{bench, dict, replay, run, sweep, synth, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "fidtrack", version, about = "Fiducial marker tracker with pose streaming")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Track a source and serve the pose stream and control API.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// PNG directory, FTRK video, or scene script (.toml).
        #[arg(long)]
        source: PathBuf,
        /// Unix socket path for the pose stream.
        #[arg(long)]
        socket: Option<PathBuf>,
        #[arg(long)]
        control_port: Option<u16>,
        /// Process frames as fast as possible.
        #[arg(long)]
        unpaced: bool,
        /// Keep serving the control API after the source ends.
        #[arg(long)]
        keep_alive: bool,
    },
    /// Compare the pose stream of a video with a golden NDJSON file.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        golden: PathBuf,
        /// Overwrite the golden file with the current output.
        #[arg(long)]
        bless: bool,
    },
    /// Render a scene script to an FTRK video.
    Synth {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a binary marker dictionary.
    Dict {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        dmin: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Cells per side of the data grid.
        #[arg(long, default_value_t = 4)]
        grid: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print detection counts and mean stage timings as CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        video: PathBuf,
    },
    /// Detection rate against projected marker size, as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        script: PathBuf,
        /// Projected edge lengths in pixels.
        #[arg(long, value_delimiter = ',', default_values_t = [4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0])]
        pixels: Vec<f64>,
    },
}

fn execute(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run { config, source, socket, control_port, unpaced, keep_alive } => {
            let opts = RunOptions { socket, control_port, unpaced, keep_alive };
            let frames = run(&config, &source, &opts)?;
            log::info!("processed {frames} frames");
        }
        Cmd::Replay { config, video, golden, bless } => {
            let lines = replay(&config, &video, &golden, bless)?;
            if bless {
                eprintln!("wrote {lines} lines to {}", golden.display());
            } else {
                eprintln!("{lines} lines match {}", golden.display());
            }
        }
        Cmd::Synth { script, out } => {
            let frames = synth(&script, &out)?;
            eprintln!("wrote {frames} frames to {}", out.display());
        }
        Cmd::Dict { count, dmin, seed, grid, out } => {
            let n = dict(count, dmin, seed, grid, &out)?;
            eprintln!("wrote {n} codes to {}", out.display());
        }
        Cmd::Bench { config, video } => print!("{}", bench(&config, &video)?),
        Cmd::Sweep { config, script, pixels } => print!("{}", sweep(&config, &script, &pixels)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
