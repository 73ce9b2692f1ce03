// SPDX-License-Identifier: Apache-2.0

use dw2::config::*;
use dw2::{Endpoint, Mode};

const SMALL: &str = r#"{
    "rows": 2, "columns": 2, "display_width": 320, "display_height": 240,
    "bezel_x": 0, "bezel_y": 0, "mode": "direct", "frames_in_flight": 1,
    "coordinator": {"host": "127.0.0.1", "port": 7000},
    "displays": [
        {"row": 0, "col": 0, "host": "127.0.0.1", "port": 7100},
        {"row": 0, "col": 1, "host": "127.0.0.1", "port": 7101},
        {"row": 1, "col": 0, "host": "127.0.0.1", "port": 7102},
        {"row": 1, "col": 1, "host": "127.0.0.1", "port": 7103}
    ]
}"#;

#[test]
fn parses_small_wall() {
    let c = parse_config(SMALL).unwrap();
    assert_eq!(c.geometry.rows, 2);
    assert_eq!(c.geometry.columns, 2);
    assert_eq!(c.virtual_size(), (640, 480));
    assert_eq!(c.mode, Mode::Direct);
    assert_eq!(c.dispatcher, Endpoint::new("127.0.0.1", 7001));
    assert_eq!(parse_config(&to_json(&c)).unwrap(), c);
}

#[test]
fn duplicate_cell_is_reported() {
    let text = SMALL.replace(r#""row": 0, "col": 1"#, r#""row": 0, "col": 0"#);
    let err = parse_config(&text).unwrap_err();
    assert!(err.to_string().contains("duplicate cell (row 0, col 0)"), "{err}");
}

#[test]
fn missing_field_names_the_key() {
    let text = SMALL.replace(r#""bezel_y": 0,"#, "");
    let err = parse_config(&text).unwrap_err();
    assert!(err.to_string().contains("bezel_y"), "{err}");
}

#[test]
fn non_positive_dimension_names_the_key() {
    let text = SMALL.replace(r#""display_width": 320"#, r#""display_width": 0"#);
    let err = parse_config(&text).unwrap_err();
    assert!(err.to_string().contains("display_width"), "{err}");
}

#[test]
fn syntax_error() {
    assert!(matches!(parse_config("{ rows: 2"), Err(ConfigFileError::Syntax(_))));
    let err = parse_config(&SMALL.replace("\"direct\"", "\"mpi\"")).unwrap_err();
    assert!(err.to_string().contains("mode"), "{err}");
}

#[test]
fn grid_helper_is_valid() {
    let c = grid_config(9, 4, 2560, 1440, Mode::Direct, 2, "wall", 9000).unwrap();
    assert_eq!(c.display_count(), 36);
    assert_eq!(c.virtual_size(), (23040, 5760));
}
