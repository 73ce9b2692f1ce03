// SPDX-License-Identifier: Apache-2.0

//! Validated wall description.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::geometry::{GeometryError, Rect, WallGeometry};

/// How clients reach the displays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Clients send every tile to one head process that forwards it.
    Dispatcher,
    /// Clients route tiles themselves and talk to each display.
    Direct,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Dispatcher => "dispatcher",
            Mode::Direct => "direct",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dispatcher" => Ok(Mode::Dispatcher),
            "direct" => Ok(Mode::Direct),
            other => Err(ConfigError::InvalidMode(other.into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
}

impl Endpoint {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Endpoint {
            host: host.into(),
            port,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisplaySpec {
    pub display_id: usize,
    pub grid_row: u32,
    pub grid_col: u32,
    /// Direct-mode data endpoint of the display process.
    pub endpoint: Endpoint,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("`{key}` must be at least {min}, got {value}")]
    TooSmall {
        key: &'static str,
        min: u32,
        value: u64,
    },
    #[error("`{0}` is too large")]
    TooLarge(&'static str),
    #[error("`displays`: expected {expected} entries (rows * columns), got {got}")]
    DisplayCount { expected: usize, got: usize },
    #[error("`displays`: cell (row {row}, col {col}) is outside the grid")]
    CellOutOfRange { row: u32, col: u32 },
    #[error("`displays`: duplicate cell (row {row}, col {col})")]
    DuplicateCell { row: u32, col: u32 },
    #[error("`displays`: display at (row {row}, col {col}) reuses the coordinator endpoint {endpoint}")]
    PortConflict { row: u32, col: u32, endpoint: Endpoint },
    #[error("`mode`: unknown mode {0:?} (expected \"dispatcher\" or \"direct\")")]
    InvalidMode(String),
}

/// A fully validated wall: geometry, display directory, endpoints and
/// session policy. Displays are stored row-major, `displays[i].display_id == i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WallConfig {
    pub geometry: WallGeometry,
    pub displays: Vec<DisplaySpec>,
    pub frames_in_flight: u32,
    pub mode: Mode,
    pub coordinator: Endpoint,
    /// Where clients reach the dispatcher. Defaults to the coordinator host,
    /// one port above the coordinator.
    pub dispatcher: Endpoint,
}

/// A display entry as written in a wall file, before validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisplayEntry {
    pub row: u32,
    pub col: u32,
    pub endpoint: Endpoint,
}

impl WallConfig {
    /// Validates raw fields and orders the display directory row-major.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        geometry: WallGeometry,
        entries: Vec<DisplayEntry>,
        frames_in_flight: u32,
        mode: Mode,
        coordinator: Endpoint,
        dispatcher: Option<Endpoint>,
    ) -> Result<Self, ConfigError> {
        for (key, value) in [
            ("columns", geometry.columns),
            ("rows", geometry.rows),
            ("display_width", geometry.display_width),
            ("display_height", geometry.display_height),
            ("frames_in_flight", frames_in_flight),
        ] {
            if value < 1 {
                return Err(ConfigError::TooSmall {
                    key,
                    min: 1,
                    value: value as u64,
                });
            }
        }
        let vw = geometry.columns as u64 * geometry.display_width as u64
            + (geometry.columns as u64 - 1) * geometry.bezel_x as u64;
        let vh = geometry.rows as u64 * geometry.display_height as u64
            + (geometry.rows as u64 - 1) * geometry.bezel_y as u64;
        if vw > u32::MAX as u64 {
            return Err(ConfigError::TooLarge("columns"));
        }
        if vh > u32::MAX as u64 {
            return Err(ConfigError::TooLarge("rows"));
        }

        let expected = geometry.display_count();
        if entries.len() != expected {
            return Err(ConfigError::DisplayCount {
                expected,
                got: entries.len(),
            });
        }
        let mut slots: Vec<Option<DisplaySpec>> = (0..expected).map(|_| None).collect();
        for entry in entries {
            if entry.row >= geometry.rows || entry.col >= geometry.columns {
                return Err(ConfigError::CellOutOfRange {
                    row: entry.row,
                    col: entry.col,
                });
            }
            if entry.endpoint == coordinator {
                return Err(ConfigError::PortConflict {
                    row: entry.row,
                    col: entry.col,
                    endpoint: entry.endpoint,
                });
            }
            let id = geometry.display_id(entry.row, entry.col);
            if slots[id].is_some() {
                return Err(ConfigError::DuplicateCell {
                    row: entry.row,
                    col: entry.col,
                });
            }
            slots[id] = Some(DisplaySpec {
                display_id: id,
                grid_row: entry.row,
                grid_col: entry.col,
                endpoint: entry.endpoint,
            });
        }
        // count matched and no duplicates, so every slot is filled
        let displays = slots.into_iter().flatten().collect();
        let dispatcher = dispatcher
            .unwrap_or_else(|| Endpoint::new(coordinator.host.clone(), coordinator.port.wrapping_add(1)));
        Ok(WallConfig {
            geometry,
            displays,
            frames_in_flight,
            mode,
            coordinator,
            dispatcher,
        })
    }

    pub fn display_count(&self) -> usize {
        self.displays.len()
    }

    pub fn virtual_size(&self) -> (u32, u32) {
        self.geometry.virtual_size()
    }

    pub fn display_region(&self, display_id: usize) -> Result<Rect, GeometryError> {
        self.geometry.display_region(display_id)
    }

    pub fn route_rect(&self, tile: &Rect) -> Result<Vec<(usize, Rect)>, GeometryError> {
        self.geometry.route_rect(tile)
    }
}
