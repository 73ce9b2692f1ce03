// SPDX-License-Identifier: Apache-2.0

//! Replays an image through a loopback wall and reports frame rate and
//! byte counts as CSV.

use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dw2::bench::{sweep, write_csv, ReplayParams, SweepSpec};
use dw2::codec::Quality;
use dw2::config::{grid_config, load_config};
use dw2::images::ImageSource;
use dw2::service::{LocalWallOptions, SinkSpec};
use dw2::Mode;

#[derive(Parser, Debug)]
#[command(name = "dw2-bench", version, about)]
struct Args {
    /// Wall description; defaults to a 2x2 wall of 320x240 displays.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured mode.
    #[arg(long)]
    mode: Option<Mode>,
    /// Image file, `synthetic` or `photo` (optionally `:<seed>`).
    #[arg(long, default_value = "synthetic")]
    image: ImageSource,
    #[arg(long, default_value_t = 64)]
    tile_size: u32,
    /// JPEG quality 1-100 or `raw`.
    #[arg(long, default_value = "75")]
    quality: Quality,
    /// Client peers, each on its own thread.
    #[arg(long, default_value_t = 1)]
    peers: u32,
    #[arg(long, default_value_t = 20)]
    frames: u32,
    /// Sweep axis as `axis=v1,v2`; repeat the flag or separate axes with
    /// `;`. Axes: tile_size, quality, peers (clients), mode, displays (CxR).
    #[arg(long)]
    sweep: Vec<String>,
    /// Runs per sweep point; the report holds the median.
    #[arg(long, default_value_t = 1)]
    repeat: u32,
    /// Decompression threads per display (default: hardware threads - 2).
    #[arg(long)]
    decomp_threads: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "warn")]
    log_level: log::LevelFilter,
}

fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    let mut config = match &args.config {
        Some(p) => load_config(p)?,
        None => grid_config(2, 2, 320, 240, Mode::Direct, 2, "127.0.0.1", 7000)?,
    };
    if let Some(m) = args.mode {
        config.mode = m;
    }
    let params = ReplayParams {
        tile_size: args.tile_size,
        quality: args.quality,
        peers: args.peers,
        frames: args.frames,
        ..Default::default()
    };
    let mut spec = SweepSpec::single(config.mode, &params);
    spec.repeat = args.repeat;
    for decl in args.sweep.iter().flat_map(|s| s.split(';')).filter(|s| !s.trim().is_empty()) {
        spec.set_axis(decl)?;
    }
    let mut wall = LocalWallOptions {
        sink: SinkSpec::Null,
        ..Default::default()
    };
    if let Some(n) = args.decomp_threads {
        wall.decomp_threads = n;
    }
    let records = sweep(&config, &args.image, &spec, &wall, &params)?;
    match &args.out {
        Some(p) => write_csv(&records, File::create(p)?)?,
        None => write_csv(&records, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new().filter_level(args.log_level).init();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dw2-bench: {e}");
            ExitCode::FAILURE
        }
    }
}
