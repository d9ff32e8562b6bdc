//! Deterministic artifacts: report.json and trajectory.csv.
//!
//! Every float is written as {:.16e} (17 significant digits), which
//! round-trips f64 exactly and makes byte-identical reruns possible. Maps
//! are ordered, so serialization order never depends on hashing.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::costate::CostateTrajectory;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Pretty JSON with every f64 in scientific notation at full precision.
/// Non-finite values never reach `write_f64`; the serializer emits null.
pub struct SciFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl SciFormatter<'_> {
    pub fn new() -> Self {
        SciFormatter {
            inner: PrettyFormatter::new(),
        }
    }
}

impl Default for SciFormatter<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl Formatter for SciFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemEcho {
    pub name: String,
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingSection {
    pub theta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub gamma: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostateSection {
    pub p0: Vec<f64>,
    pub terminal_mismatch: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryEntry {
    pub s: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeSection {
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: String,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateSection {
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub radius: f64,
    pub bound: Option<f64>,
    pub hypotheses_hold: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudySection {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnitudes: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remainders: Option<Vec<f64>>,
    pub reference: Option<f64>,
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    pub failures: Vec<String>,
}

/// Everything a run reports. Sections absent for a mode are omitted from
/// the JSON; scalar fields that did not apply serialize as null.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub mode: String,
    pub problem: ProblemEcho,
    pub schedule: Vec<f64>,
    pub steps_per_unit: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_star: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shooting: Option<ShootingSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub costate: Option<CostateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Report {
    pub fn new(
        mode: &str,
        name: &str,
        overrides: BTreeMap<String, f64>,
        schedule: Vec<f64>,
        steps_per_unit: usize,
        seed: u64,
    ) -> Self {
        Report {
            mode: mode.to_string(),
            problem: ProblemEcho {
                name: name.to_string(),
                overrides,
            },
            schedule,
            steps_per_unit,
            seed,
            objective: None,
            gradient: None,
            s_star: None,
            shooting: None,
            costate: None,
            optimize: None,
            certificate: None,
            study: None,
            error: None,
        }
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut ser = Serializer::with_formatter(&mut out, SciFormatter::new());
        self.serialize(&mut ser)
            .map_err(|e| Error::Io(format!("serializing report: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("report.json"), self.to_json_bytes()?)?;
        Ok(())
    }
}

pub fn costate_section(ct: &CostateTrajectory<f64>, within_tolerance: bool) -> CostateSection {
    CostateSection {
        p0: ct.p0().to_vec(),
        terminal_mismatch: ct.terminal_mismatch(),
        within_tolerance,
    }
}

/// Writes t, x_1..x_n, p_1..p_n, phase per mesh node, LF line endings.
/// Costate cells stay empty when no costate was computed.
pub fn write_trajectory_csv(
    dir: &Path,
    trajectory: &Trajectory<f64>,
    costate: Option<&CostateTrajectory<f64>>,
) -> Result<()> {
    let mesh = trajectory.mesh();
    let n = trajectory.value(0).len();
    let mut text = String::from("t");
    for i in 1..=n {
        text.push_str(&format!(",x_{i}"));
    }
    for i in 1..=n {
        text.push_str(&format!(",p_{i}"));
    }
    text.push_str(",phase\n");

    let last_interval = mesh.num_intervals().saturating_sub(1);
    for (k, &t) in mesh.nodes().iter().enumerate() {
        text.push_str(&format!("{t:.16e}"));
        for v in trajectory.value(k) {
            text.push_str(&format!(",{v:.16e}"));
        }
        match costate {
            Some(ct) => {
                for v in ct.value(k) {
                    text.push_str(&format!(",{v:.16e}"));
                }
            }
            None => text.push_str(&",".repeat(n)),
        }
        let phase = mesh.phase_of_interval(k.min(last_interval));
        text.push_str(&format!(",{phase}\n"));
    }
    fs::write(dir.join("trajectory.csv"), text)?;
    Ok(())
}
