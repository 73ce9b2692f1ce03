// SPDX-License-Identifier: Apache-2.0

//! JSON wall description files.
//!
//! ```json
//! {
//!   "rows": 2, "columns": 2,
//!   "display_width": 320, "display_height": 240,
//!   "bezel_x": 0, "bezel_y": 0,
//!   "mode": "direct", "frames_in_flight": 2,
//!   "coordinator": {"host": "127.0.0.1", "port": 7000},
//!   "displays": [{"row": 0, "col": 0, "host": "127.0.0.1", "port": 7100}, ...]
//! }
//! ```
//!
//! An optional `dispatcher` endpoint names where clients reach the head
//! process in dispatcher mode; it defaults to the coordinator host, one port
//! above the coordinator.

use std::path::Path;

use dw2_core::config::DisplayEntry;
use dw2_core::{ConfigError, Endpoint, Mode, WallConfig, WallGeometry};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("wall config syntax: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("wall config: {0}")]
    Invalid(#[from] ConfigError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointDoc {
    host: String,
    port: u16,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DisplayDoc {
    row: u32,
    col: u32,
    host: String,
    port: u16,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WallDoc {
    rows: u32,
    columns: u32,
    display_width: u32,
    display_height: u32,
    bezel_x: u32,
    bezel_y: u32,
    mode: String,
    frames_in_flight: u32,
    displays: Vec<DisplayDoc>,
    coordinator: EndpointDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dispatcher: Option<EndpointDoc>,
}

pub fn parse_config(text: &str) -> Result<WallConfig, ConfigFileError> {
    let doc: WallDoc = serde_json::from_str(text)?;
    let mode: Mode = doc.mode.parse()?;
    let geometry = WallGeometry {
        columns: doc.columns,
        rows: doc.rows,
        display_width: doc.display_width,
        display_height: doc.display_height,
        bezel_x: doc.bezel_x,
        bezel_y: doc.bezel_y,
    };
    let entries = doc
        .displays
        .into_iter()
        .map(|d| DisplayEntry {
            row: d.row,
            col: d.col,
            endpoint: Endpoint::new(d.host, d.port),
        })
        .collect();
    Ok(WallConfig::new(
        geometry,
        entries,
        doc.frames_in_flight,
        mode,
        Endpoint::new(doc.coordinator.host, doc.coordinator.port),
        doc.dispatcher.map(|e| Endpoint::new(e.host, e.port)),
    )?)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<WallConfig, ConfigFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Serializes a config back into the file schema.
pub fn to_json(config: &WallConfig) -> String {
    let g = &config.geometry;
    let doc = WallDoc {
        rows: g.rows,
        columns: g.columns,
        display_width: g.display_width,
        display_height: g.display_height,
        bezel_x: g.bezel_x,
        bezel_y: g.bezel_y,
        mode: config.mode.as_str().to_string(),
        frames_in_flight: config.frames_in_flight,
        displays: config
            .displays
            .iter()
            .map(|d| DisplayDoc {
                row: d.grid_row,
                col: d.grid_col,
                host: d.endpoint.host.clone(),
                port: d.endpoint.port,
            })
            .collect(),
        coordinator: EndpointDoc {
            host: config.coordinator.host.clone(),
            port: config.coordinator.port,
        },
        dispatcher: Some(EndpointDoc {
            host: config.dispatcher.host.clone(),
            port: config.dispatcher.port,
        }),
    };
    serde_json::to_string_pretty(&doc).expect("wall config serializes")
}

/// A `columns x rows` wall on one host with consecutive ports after
/// `base_port` (coordinator, dispatcher, then displays row-major).
#[allow(clippy::too_many_arguments)]
pub fn grid_config(
    columns: u32,
    rows: u32,
    display_width: u32,
    display_height: u32,
    mode: Mode,
    frames_in_flight: u32,
    host: &str,
    base_port: u16,
) -> Result<WallConfig, ConfigError> {
    let entries = (0..rows)
        .flat_map(|row| (0..columns).map(move |col| (row, col)))
        .map(|(row, col)| DisplayEntry {
            row,
            col,
            endpoint: Endpoint::new(host, base_port + 2 + (row * columns + col) as u16),
        })
        .collect();
    WallConfig::new(
        WallGeometry {
            columns,
            rows,
            display_width,
            display_height,
            bezel_x: 0,
            bezel_y: 0,
        },
        entries,
        frames_in_flight,
        mode,
        Endpoint::new(host, base_port),
        Some(Endpoint::new(host, base_port + 1)),
    )
}
