//! Labeled point clouds, the exchange type between every stage, and their
//! CSV / PLY encodings.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Instance id shared by all terrain points.
pub const TERRAIN_INSTANCE: u32 = 0;
/// Instance id shared by all grass points.
pub const GRASS_INSTANCE: u32 = 1;
/// First id handed to instanced prefabs.
pub const FIRST_PREFAB_INSTANCE: u32 = 2;

pub const CLOUD_CSV_HEADER: &str = "x,y,z,label,instance_id";

/// Scene-level point categories with stable integer codes 0..=8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Terrain = 0,
    Trunk = 1,
    Canopy = 2,
    Branches = 3,
    Bushes = 4,
    Understorey = 5,
    Grass = 6,
    Cactus = 7,
    Deadwood = 8,
}

impl Label {
    pub const ALL: [Label; 9] = [
        Label::Terrain,
        Label::Trunk,
        Label::Canopy,
        Label::Branches,
        Label::Bushes,
        Label::Understorey,
        Label::Grass,
        Label::Cactus,
        Label::Deadwood,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Label> {
        Label::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Terrain => "terrain",
            Label::Trunk => "trunk",
            Label::Canopy => "canopy",
            Label::Branches => "branches",
            Label::Bushes => "bushes",
            Label::Understorey => "understorey",
            Label::Grass => "grass",
            Label::Cactus => "cactus",
            Label::Deadwood => "deadwood",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub position: Vec3,
    pub label: Label,
    pub instance_id: u32,
}

impl PointRecord {
    pub fn new(position: Vec3, label: Label, instance_id: u32) -> Self {
        PointRecord {
            position,
            label,
            instance_id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    records: Vec<PointRecord>,
}

impl LabeledPointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<PointRecord>) -> Self {
        LabeledPointCloud { records }
    }

    pub fn records(&self) -> &[PointRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [PointRecord] {
        &mut self.records
    }

    pub fn into_records(self) -> Vec<PointRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: PointRecord) {
        self.records.push(r);
    }

    pub fn extend(&mut self, other: LabeledPointCloud) {
        self.records.extend(other.records);
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.records.iter().map(|r| r.position).collect()
    }

    /// Records at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledPointCloud {
        LabeledPointCloud::from_records(indices.iter().map(|&i| self.records[i]).collect())
    }

    /// Point count per label code.
    pub fn label_histogram(&self) -> [usize; 9] {
        let mut h = [0; 9];
        for r in &self.records {
            h[r.label.code() as usize] += 1;
        }
        h
    }

    /// CSV text with header `x,y,z,label,instance_id`, six fractional digits,
    /// LF line endings.
    pub fn to_csv_string(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::with_capacity(48 * (self.records.len() + 1));
        s.push_str(CLOUD_CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let p = r.position;
            let _ = writeln!(
                s,
                "{:.6},{:.6},{:.6},{},{}",
                p.x, p.y, p.z, r.label, r.instance_id
            );
        }
        s
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn import_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn parse_csv(text: &str, source: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let parse_err = |line: u64, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != CLOUD_CSV_HEADER {
            return Err(parse_err(
                1,
                format!("expected header `{CLOUD_CSV_HEADER}`"),
            ));
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != 5 {
                return Err(parse_err(
                    line,
                    format!("expected 5 fields, found {}", row.len()),
                ));
            }
            let coord = |i: usize| -> Result<f64> {
                row[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("invalid coordinate `{}`", &row[i])))
            };
            let position = Vec3::new(coord(0)?, coord(1)?, coord(2)?);
            let label = row[3]
                .parse::<Label>()
                .map_err(|e| parse_err(line, e.to_string()))?;
            let instance_id = row[4]
                .parse::<u32>()
                .map_err(|_| parse_err(line, format!("invalid instance id `{}`", &row[4])))?;
            records.push(PointRecord::new(position, label, instance_id));
        }
        Ok(LabeledPointCloud { records })
    }

    /// Binary little-endian PLY with float xyz, uchar label, uint instance_id.
    pub fn export_ply(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
             property float x\nproperty float y\nproperty float z\n\
             property uchar label\nproperty uint instance_id\nend_header\n",
            self.records.len()
        )
        .map_err(io)?;
        for r in &self.records {
            let p = r.position;
            for v in [p.x as f32, p.y as f32, p.z as f32] {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
            w.write_all(&[r.label.code()]).map_err(io)?;
            w.write_all(&r.instance_id.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}
