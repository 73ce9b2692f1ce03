// SPDX-License-Identifier: Apache-2.0

//! Runs one role of the wall service, or all of them with `--local-wall`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use dw2::config::load_config;
use dw2::service::display::default_decomp_threads;
use dw2::service::local::bind;
use dw2::service::{
    run_coordinator, run_dispatcher, run_display, CoordinatorStats, DisplayOptions, LocalWall, LocalWallOptions,
    ServiceError, SinkSpec, StopSignal,
};
use dw2::Mode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RoleArg {
    Coordinator,
    Dispatcher,
    Display,
    /// Coordinator plus, in dispatcher mode, the dispatcher.
    Head,
}

#[derive(Parser, Debug)]
#[command(name = "dw2-service", version, about)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Override the configured mode.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, value_enum, required_unless_present = "local_wall")]
    role: Option<RoleArg>,
    /// Display index (row-major) for `--role display`.
    #[arg(long, required_if_eq("role", "display"))]
    display_id: Option<usize>,
    /// png:<dir>, null or window.
    #[arg(long, default_value = "null")]
    sink: SinkSpec,
    #[arg(long)]
    decomp_threads: Option<usize>,
    #[arg(long, default_value = "info")]
    log_level: log::LevelFilter,
    /// Run every role of the wall in this process, on the configured ports.
    #[arg(long, conflicts_with = "role")]
    local_wall: bool,
}

fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    let mut config = load_config(&args.config)?;
    if let Some(m) = args.mode {
        config.mode = m;
    }
    let decomp_threads = args.decomp_threads.unwrap_or_else(default_decomp_threads);
    // fail early on an unusable sink
    drop(args.sink.build()?);
    let stop = StopSignal::new();
    match args.role {
        None => {
            let wall = LocalWall::start(
                &config,
                LocalWallOptions {
                    sink: args.sink,
                    decomp_threads,
                    ephemeral_ports: false,
                },
            )?;
            wall.wait()?;
        }
        Some(RoleArg::Coordinator) => {
            run_coordinator(&config, bind(&config.coordinator)?, stop, Arc::default())?;
        }
        Some(RoleArg::Dispatcher) => {
            if config.mode != Mode::Dispatcher {
                return Err("the dispatcher role needs dispatcher mode".into());
            }
            run_dispatcher(&config, bind(&config.dispatcher)?, stop, Arc::default())?;
        }
        Some(RoleArg::Display) => {
            let id = args.display_id.expect("required by clap");
            let spec = config
                .displays
                .get(id)
                .ok_or_else(|| format!("display {id} is not in the config"))?;
            let listener = bind(&spec.endpoint)?;
            let options = DisplayOptions {
                decomp_threads,
                ..Default::default()
            };
            run_display(&config, id, listener, args.sink.build()?, options, stop, Arc::default())?;
        }
        Some(RoleArg::Head) => {
            let coordinator = bind(&config.coordinator)?;
            let dispatcher = match config.mode {
                Mode::Dispatcher => Some(bind(&config.dispatcher)?),
                Mode::Direct => None,
            };
            let stats: Arc<CoordinatorStats> = Arc::default();
            std::thread::scope(|s| -> Result<(), ServiceError> {
                let d = dispatcher.map(|l| {
                    let (cfg, stop) = (&config, stop.clone());
                    s.spawn(move || run_dispatcher(cfg, l, stop, Arc::default()))
                });
                let r = run_coordinator(&config, coordinator, stop.clone(), stats);
                stop.stop();
                if let Some(d) = d {
                    d.join().expect("dispatcher thread")?;
                }
                r
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new().filter_level(args.log_level).init();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dw2-service: {e}");
            ExitCode::FAILURE
        }
    }
}
