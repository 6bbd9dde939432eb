//! File formats: trajectory and solution CSVs, telemetry, scenario JSON,
//! and preset dumps.
//!
//! Angles in files carry a `_deg` suffix and are degrees; everything
//! unsuffixed is SI (radians internally). Numbers are written in shortest
//! round-trip decimal form, so re-reading and re-writing a file reproduces
//! it byte for byte.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::aero::{preset, AeroPolar, AircraftParams, Preset, PresetId};
use crate::error::{Error, Result};
use crate::forward::TelemetryRow;
use crate::geom::{BodyVec, Rot3, WorldVec};
use crate::inverse::{InverseSolution, TrajectoryPoint, TrimOptions};
use crate::tether::TetherScenario;

/// Canonical trajectory CSV header. Files may stop after a trailing group
/// boundary (10, 13, or 16 columns); missing groups default to zero.
pub const TRAJECTORY_HEADER: [&str; 19] = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "fx", "fy", "fz", "taux", "tauy",
    "tauz", "wx", "wy", "wz",
];

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn malformed(path: &str, line: u64, msg: impl Into<String>) -> Error {
    Error::Malformed { path: path.to_string(), line, msg: msg.into() }
}

/// Reads a trajectory CSV; see [`TRAJECTORY_HEADER`] for the schema.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryPoint>> {
    let file = File::open(path)?;
    read_trajectory(file, &path.display().to_string())
}

/// Reads a trajectory CSV from any reader; `label` names the source in
/// error messages.
pub fn read_trajectory<R: Read>(reader: R, label: &str) -> Result<Vec<TrajectoryPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n_cols = headers.len();
    if ![10, 13, 16, 19].contains(&n_cols) {
        return Err(malformed(
            label,
            1,
            format!("expected 10, 13, 16, or 19 columns, found {n_cols}"),
        ));
    }
    for (i, (found, want)) in headers.iter().zip(TRAJECTORY_HEADER).enumerate() {
        if found != want {
            return Err(malformed(
                label,
                1,
                format!("column {} must be `{want}`, found `{found}`", i + 1),
            ));
        }
    }

    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n_cols {
            return Err(malformed(
                label,
                line,
                format!("expected {n_cols} fields, found {}", record.len()),
            ));
        }
        let mut values = [0.0f64; 19];
        for (i, field) in record.iter().enumerate() {
            values[i] = field.parse().map_err(|_| {
                malformed(label, line, format!("field `{}` is not a number: `{field}`",
                    TRAJECTORY_HEADER[i]))
            })?;
        }
        let pt = TrajectoryPoint {
            t: values[0],
            position: WorldVec::new(values[1], values[2], values[3]),
            velocity: WorldVec::new(values[4], values[5], values[6]),
            acceleration: WorldVec::new(values[7], values[8], values[9]),
            f_ext_world: WorldVec::new(values[10], values[11], values[12]),
            tau_ext_body: BodyVec::new(values[13], values[14], values[15]),
            wind_world: WorldVec::new(values[16], values[17], values[18]),
        };
        if let Some(prev) = points.last() {
            let prev: &TrajectoryPoint = prev;
            if pt.t <= prev.t {
                return Err(malformed(
                    label,
                    line,
                    format!("sample times must be strictly increasing ({} after {})", pt.t, prev.t),
                ));
            }
        }
        points.push(pt);
    }
    Ok(points)
}

/// Writes a trajectory with the full 19-column header.
pub fn write_trajectory_csv(path: &Path, points: &[TrajectoryPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(TRAJECTORY_HEADER)?;
    for pt in points {
        let cols: Vec<String> = [
            pt.t,
            pt.position.x(),
            pt.position.y(),
            pt.position.z(),
            pt.velocity.x(),
            pt.velocity.y(),
            pt.velocity.z(),
            pt.acceleration.x(),
            pt.acceleration.y(),
            pt.acceleration.z(),
            pt.f_ext_world.x(),
            pt.f_ext_world.y(),
            pt.f_ext_world.z(),
            pt.tau_ext_body.x(),
            pt.tau_ext_body.y(),
            pt.tau_ext_body.z(),
            pt.wind_world.x(),
            pt.wind_world.y(),
            pt.wind_world.z(),
        ]
        .iter()
        .map(|v| fmt_f64(*v))
        .collect();
        w.write_record(&cols)?;
    }
    w.flush()?;
    Ok(())
}

fn solution_header(n_controls: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t", "R11", "R12", "R13", "R21", "R22", "R23", "R31", "R32", "R33", "wx_b", "wy_b",
        "wz_b", "T", "alpha", "beta", "Cl", "Cm", "Cn",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 1..=n_controls {
        h.push(format!("u{i}"));
    }
    h.push("flags".into());
    h
}

/// Writes inversion results; `alpha`/`beta` are radians, the rotation is
/// row-major, and `flags` holds `ok` or semicolon-joined status tokens.
pub fn write_solutions_csv(path: &Path, solutions: &[InverseSolution]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    write_solutions(&mut w, solutions)
}

pub fn write_solutions<W: Write>(
    w: &mut csv::Writer<W>,
    solutions: &[InverseSolution],
) -> Result<()> {
    let n_controls = solutions.first().map_or(0, |s| s.controls.len());
    w.write_record(solution_header(n_controls))?;
    for s in solutions {
        let m = s.rotation.matrix();
        let mut cols = vec![fmt_f64(s.t)];
        for r in 0..3 {
            for c in 0..3 {
                cols.push(fmt_f64(m[(r, c)]));
            }
        }
        cols.push(fmt_f64(s.omega_body.x()));
        cols.push(fmt_f64(s.omega_body.y()));
        cols.push(fmt_f64(s.omega_body.z()));
        cols.push(fmt_f64(s.thrust));
        cols.push(fmt_f64(s.alpha));
        cols.push(fmt_f64(s.beta));
        for c in s.moment_coeffs {
            cols.push(fmt_f64(c));
        }
        for u in s.controls.iter() {
            cols.push(fmt_f64(*u));
        }
        cols.push(s.flags.to_string());
        w.write_record(&cols)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a solution CSV back. The angular acceleration is not part of the
/// schema and comes back as zero.
pub fn read_solutions_csv(path: &Path) -> Result<Vec<InverseSolution>> {
    let label = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(File::open(path)?);
    let headers = rdr.headers()?.clone();
    let n_cols = headers.len();
    if n_cols < 20 || headers.iter().next() != Some("t") {
        return Err(malformed(&label, 1, "not a solution CSV"));
    }
    let n_controls = n_cols - 20;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| malformed(&label, line, "missing field"))?
                .parse()
                .map_err(|_| malformed(&label, line, format!("bad number in field {}", i + 1)))
        };
        let mut m = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] = num(1 + 3 * r + c)?;
            }
        }
        let controls =
            DVector::from_iterator(n_controls, (0..n_controls).map(|i| num(19 + i).unwrap_or(f64::NAN)));
        let flags = record
            .get(n_cols - 1)
            .unwrap_or("ok")
            .parse()
            .map_err(|e: String| malformed(&label, line, e))?;
        out.push(InverseSolution {
            t: num(0)?,
            rotation: Rot3::from_matrix_unchecked(m),
            omega_body: BodyVec::new(num(10)?, num(11)?, num(12)?),
            omega_dot_body: BodyVec::zeros(),
            thrust: num(13)?,
            alpha: num(14)?,
            beta: num(15)?,
            moment_coeffs: [num(16)?, num(17)?, num(18)?],
            controls,
            flags,
        });
    }
    Ok(out)
}

/// Writes round-trip telemetry:
/// `t,px,py,pz,R11..R33,wx_b,wy_b,wz_b,pos_err,att_err`.
pub fn write_telemetry_csv(path: &Path, rows: &[TelemetryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> =
        ["t", "px", "py", "pz"].iter().map(|s| s.to_string()).collect();
    for r in 1..=3 {
        for c in 1..=3 {
            header.push(format!("R{r}{c}"));
        }
    }
    header.extend(["wx_b", "wy_b", "wz_b", "pos_err", "att_err"].map(String::from));
    w.write_record(&header)?;
    for row in rows {
        let mut cols = vec![
            fmt_f64(row.t),
            fmt_f64(row.position.x()),
            fmt_f64(row.position.y()),
            fmt_f64(row.position.z()),
        ];
        let m = row.attitude.matrix();
        for r in 0..3 {
            for c in 0..3 {
                cols.push(fmt_f64(m[(r, c)]));
            }
        }
        cols.push(fmt_f64(row.omega_body.x()));
        cols.push(fmt_f64(row.omega_body.y()));
        cols.push(fmt_f64(row.omega_body.z()));
        cols.push(fmt_f64(row.pos_err));
        cols.push(fmt_f64(row.att_err));
        w.write_record(&cols)?;
    }
    w.flush()?;
    Ok(())
}

/// Inline polar coefficients of a scenario file.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolarSpec {
    /// Lift slope [1/rad].
    pub a: f64,
    #[serde(rename = "C_D0")]
    pub c_d0: f64,
    /// Quadratic drag coefficient in alpha [1/rad^2].
    pub k_alpha: f64,
}

fn default_gravity() -> f64 {
    crate::GRAVITY
}

fn default_rho() -> f64 {
    crate::SEA_LEVEL_AIR_DENSITY
}

/// On-disk scenario schema. `polar` and `preset` are mutually exclusive;
/// a preset supplies the airframe (and its wing area), an inline polar
/// needs `S` alongside it for anything beyond the bank law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "L")]
    pub length: f64,
    pub theta_deg: f64,
    pub v0: f64,
    #[serde(rename = "F_ext", default)]
    pub f_ext: f64,
    pub m: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub psi0_deg: f64,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s_ref: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polar: Option<PolarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

/// A scenario with its aerodynamic model resolved and validated.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: TetherScenario,
    pub polar: AeroPolar,
    /// Wing reference area [m^2]; absent when an inline polar came without
    /// `S` (the bank law needs neither).
    pub s_ref: Option<f64>,
    /// Full airframe, available when the scenario names a preset.
    pub params: Option<AircraftParams>,
    /// Stall bound for trim solves [rad].
    pub alpha_max: f64,
}

impl ResolvedScenario {
    /// The built-in tethered demo: Paper5 airframe, 20 m cable, 11.7 m/s.
    pub fn demo() -> Self {
        let p = preset(PresetId::Paper5);
        let scenario = TetherScenario::demo();
        let mut params = p.params;
        params.rho = scenario.rho;
        Self {
            scenario,
            polar: p.polar,
            s_ref: Some(params.s_ref),
            alpha_max: params.alpha_max,
            params: Some(params),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Self::from_file_schema(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_json_str(&text)
    }

    pub fn from_file_schema(file: ScenarioFile) -> Result<Self> {
        let scenario = TetherScenario::new(
            file.length,
            file.theta_deg.to_radians(),
            file.v0,
            file.f_ext,
            file.m,
            file.g,
            file.rho,
            file.psi0_deg.to_radians(),
        )?;
        match (&file.preset, &file.polar) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter(
                "scenario cannot set both `preset` and `polar`".into(),
            )),
            (None, None) => Err(Error::InvalidParameter(
                "scenario needs either `preset` or `polar`".into(),
            )),
            (Some(name), None) => {
                let p: Preset = preset(
                    name.parse::<PresetId>().map_err(Error::InvalidParameter)?,
                );
                let mut params = p.params;
                params.mass = scenario.mass;
                params.rho = scenario.rho;
                if let Some(s) = file.s_ref {
                    params.s_ref = s;
                }
                params.validate()?;
                Ok(Self {
                    scenario,
                    polar: p.polar,
                    s_ref: Some(params.s_ref),
                    alpha_max: params.alpha_max,
                    params: Some(params),
                })
            }
            (None, Some(ps)) => {
                if !(ps.a > 0.0 && ps.c_d0 > 0.0 && ps.k_alpha > 0.0) {
                    return Err(Error::InvalidParameter(
                        "polar coefficients must be positive".into(),
                    ));
                }
                Ok(Self {
                    scenario,
                    polar: AeroPolar::from_k_alpha(ps.a, ps.c_d0, ps.k_alpha),
                    s_ref: file.s_ref,
                    params: None,
                    alpha_max: TrimOptions::default().alpha_max,
                })
            }
        }
    }

    pub fn trim_options(&self) -> TrimOptions {
        TrimOptions { alpha_max: self.alpha_max, ..TrimOptions::default() }
    }

    /// Wing area, or an input error naming what is missing.
    pub fn require_s_ref(&self) -> Result<f64> {
        self.s_ref.ok_or_else(|| {
            Error::InvalidParameter(
                "scenario has no wing area: add `S` or use a `preset`".into(),
            )
        })
    }

    /// Full airframe parameters, or an input error naming what is missing.
    pub fn require_params(&self) -> Result<&AircraftParams> {
        self.params.as_ref().ok_or_else(|| {
            Error::InvalidParameter(
                "scenario has no airframe (inertia etc.): use a `preset`".into(),
            )
        })
    }
}

/// JSON dump schema of one preset, with the exact published column names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetDump {
    pub m: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub b: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
    pub e: f64,
    #[serde(rename = "C_L_alpha")]
    pub c_l_alpha: f64,
    #[serde(rename = "C_D0")]
    pub c_d0: f64,
    pub k: f64,
    pub k_alpha: f64,
    pub rho: f64,
    #[serde(rename = "V_cruise")]
    pub v_cruise: f64,
    pub q: f64,
}

impl PresetDump {
    pub fn from_preset(p: &Preset) -> Self {
        Self {
            m: p.params.mass,
            s: p.params.s_ref,
            b: p.params.span,
            ar: p.aspect_ratio,
            e: p.oswald,
            c_l_alpha: p.polar.lift_slope,
            c_d0: p.polar.c_d0,
            k: p.polar.induced,
            k_alpha: p.polar.k_alpha,
            rho: p.params.rho,
            v_cruise: p.v_cruise,
            q: p.q_cruise,
        }
    }

    /// Rebuilds airframe parameters and polar from the dump, using the same
    /// construction rules as the built-in presets.
    pub fn reconstruct(&self) -> (AircraftParams, AeroPolar) {
        let chord = self.s / self.b;
        let (b2, c2) = (self.b * self.b, chord * chord);
        let inertia = Matrix3::from_diagonal(
            &(nalgebra::Vector3::new(b2, c2, b2 + c2) * (self.m / 12.0)),
        );
        let params = AircraftParams {
            mass: self.m,
            inertia,
            rho: self.rho,
            s_ref: self.s,
            span: self.b,
            chord,
            rate_damping: Matrix3::zeros(),
            thrust_dir_body: BodyVec::chord_axis(),
            alpha_max: TrimOptions::default().alpha_max,
            t_max: f64::INFINITY,
        };
        (params, AeroPolar::from_parts(self.c_l_alpha, self.c_d0, self.k, self.k_alpha))
    }
}

/// Dumps one or all presets as pretty JSON (object per preset, keyed map
/// when `id` is `None`).
pub fn preset_dump_json(id: Option<PresetId>) -> String {
    match id {
        Some(id) => serde_json::to_string_pretty(&PresetDump::from_preset(&preset(id)))
            .expect("preset dump serializes"),
        None => {
            let map: serde_json::Map<String, serde_json::Value> = PresetId::ALL
                .iter()
                .map(|id| {
                    (
                        id.name().to_string(),
                        serde_json::to_value(PresetDump::from_preset(&preset(*id)))
                            .expect("preset dump serializes"),
                    )
                })
                .collect();
            serde_json::to_string_pretty(&serde_json::Value::Object(map))
                .expect("preset dump serializes")
        }
    }
}
