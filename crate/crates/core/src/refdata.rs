//! Bundled reference tables: grid carbon intensity per country, processor
//! benchmark/TDP pairs, and address → country mappings.
//!
//! The default tables are compiled into the crate. A directory holding
//! `grid_intensity.csv`, `hardware.csv` and `locations.csv` with the same
//! headers can replace them (see [`ReferenceData::load_dir`]).

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming a directory that overrides the bundled tables.
pub const DATA_DIR_ENV: &str = "FEDSUST_DATA_DIR";

pub const GRID_FILE: &str = "grid_intensity.csv";
pub const HARDWARE_FILE: &str = "hardware.csv";
pub const LOCATIONS_FILE: &str = "locations.csv";

const GRID_HEADER: [&str; 4] = ["country_code", "intensity_gco2_per_kwh", "source", "comment"];
const HARDWARE_HEADER: [&str; 5] = ["model", "kind", "benchmark_mark", "tdp_watts", "power_performance"];
const LOCATIONS_HEADER: [&str; 2] = ["prefix", "country_code"];

/// Lowest and highest intensities physically possible with today's sources
/// (pure wind/nuclear vs. pure coal), gCO₂eq/kWh.
pub const THEORETICAL_INTENSITY_BOUNDS: (f64, f64) = (11.0, 820.0);

/// Observed national-grid bounds used for normalization, gCO₂eq/kWh.
pub const COUNTRY_INTENSITY_BOUNDS: (f64, f64) = (20.0, 795.0);

/// Power-performance bounds used for normalization, marks per watt.
pub const POWER_PERFORMANCE_BOUNDS: (f64, f64) = (20.0, 1447.0);

const BUNDLED_GRID: &str = include_str!("../data/grid_intensity.csv");
const BUNDLED_HARDWARE: &str = include_str!("../data/hardware.csv");
const BUNDLED_LOCATIONS: &str = include_str!("../data/locations.csv");

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(file: &str, rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::DataFile {
        file: file.into(),
        reason: e.to_string(),
    })?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::DataFile {
            file: file.into(),
            reason: format!("header is `{}`, expected `{}`", found.join(","), expected.join(",")),
        });
    }
    Ok(())
}

/// Iterates data rows as (1-based line number, record).
fn rows(file: &str, rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::DataRow {
            file: file.into(),
            row,
            column: "*".into(),
            reason: e.to_string(),
        })?;
        out.push((row, rec));
    }
    Ok(out)
}

fn field<'a>(file: &str, row: usize, rec: &'a csv::StringRecord, idx: usize, column: &str) -> Result<&'a str> {
    rec.get(idx).ok_or_else(|| Error::DataRow {
        file: file.into(),
        row,
        column: column.into(),
        reason: "missing field".into(),
    })
}

fn number(file: &str, row: usize, rec: &csv::StringRecord, idx: usize, column: &str) -> Result<f64> {
    let text = field(file, row, rec, idx, column)?;
    let value: f64 = text.parse().map_err(|_| Error::DataRow {
        file: file.into(),
        row,
        column: column.into(),
        reason: format!("`{text}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::DataRow {
            file: file.into(),
            row,
            column: column.into(),
            reason: format!("`{text}` is not finite"),
        });
    }
    Ok(value)
}

fn is_country_code(s: &str) -> bool {
    s.len() == 2 && s.bytes().all(|b| b.is_ascii_alphabetic())
}

/// Country code (ISO 3166-1 alpha-2, plus `XK`) → gCO₂eq per kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct GridIntensityTable {
    entries: BTreeMap<String, f64>,
}

impl GridIntensityTable {
    pub fn from_csv_str(text: &str, file: &str) -> Result<Self> {
        let mut rdr = reader(text);
        check_header(file, &mut rdr, &GRID_HEADER)?;
        let mut entries = BTreeMap::new();
        for (row, rec) in rows(file, &mut rdr)? {
            let code = field(file, row, &rec, 0, "country_code")?;
            if !is_country_code(code) {
                return Err(Error::DataRow {
                    file: file.into(),
                    row,
                    column: "country_code".into(),
                    reason: format!("`{code}` is not a two-letter code"),
                });
            }
            let intensity = number(file, row, &rec, 1, "intensity_gco2_per_kwh")?;
            let (lo, hi) = THEORETICAL_INTENSITY_BOUNDS;
            if !(lo..=hi).contains(&intensity) {
                return Err(Error::DataRow {
                    file: file.into(),
                    row,
                    column: "intensity_gco2_per_kwh".into(),
                    reason: format!("{intensity} outside [{lo}, {hi}]"),
                });
            }
            if entries.insert(code.to_ascii_uppercase(), intensity).is_some() {
                return Err(Error::DataRow {
                    file: file.into(),
                    row,
                    column: "country_code".into(),
                    reason: format!("duplicate code `{code}`"),
                });
            }
        }
        if entries.is_empty() {
            return Err(Error::DataFile {
                file: file.into(),
                reason: "table is empty".into(),
            });
        }
        Ok(GridIntensityTable { entries })
    }

    pub fn lookup(&self, country: &str) -> Result<f64> {
        self.entries
            .get(&country.to_ascii_uppercase())
            .copied()
            .ok_or_else(|| Error::UnknownGrid(country.to_string()))
    }

    pub fn contains(&self, country: &str) -> bool {
        self.entries.contains_key(&country.to_ascii_uppercase())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HardwareKind {
    #[serde(rename = "CPU")]
    Cpu,
    #[serde(rename = "GPU")]
    Gpu,
}

/// A processor's benchmark mark, TDP and derived marks-per-watt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub model: String,
    pub kind: HardwareKind,
    pub benchmark: f64,
    pub tdp: f64,
    pub power_performance: f64,
}

impl HardwareProfile {
    pub fn new(model: impl Into<String>, kind: HardwareKind, benchmark: f64, tdp: f64) -> Result<Self> {
        Ok(HardwareProfile {
            model: model.into(),
            kind,
            benchmark,
            tdp,
            power_performance: power_performance(benchmark, tdp)?,
        })
    }
}

/// Benchmark mark divided by TDP watts.
pub fn power_performance(benchmark: f64, tdp: f64) -> Result<f64> {
    if !(benchmark.is_finite() && benchmark > 0.0) {
        return Err(Error::invalid("benchmark", format!("{benchmark} must be positive")));
    }
    if !(tdp.is_finite() && tdp > 0.0) {
        return Err(Error::invalid("tdp", format!("{tdp} must be positive")));
    }
    Ok(benchmark / tdp)
}

/// Lower-cased, whitespace-collapsed lookup key.
pub fn model_key(model: &str) -> String {
    model.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareTable {
    profiles: BTreeMap<String, HardwareProfile>,
}

impl HardwareTable {
    pub fn from_csv_str(text: &str, file: &str) -> Result<Self> {
        let mut rdr = reader(text);
        check_header(file, &mut rdr, &HARDWARE_HEADER)?;
        let mut profiles = BTreeMap::new();
        for (row, rec) in rows(file, &mut rdr)? {
            let bad = |column: &str, reason: String| Error::DataRow {
                file: file.into(),
                row,
                column: column.into(),
                reason,
            };
            let model = field(file, row, &rec, 0, "model")?;
            if model.is_empty() {
                return Err(bad("model", "empty model name".into()));
            }
            let kind = match field(file, row, &rec, 1, "kind")?.to_ascii_uppercase().as_str() {
                "CPU" => HardwareKind::Cpu,
                "GPU" => HardwareKind::Gpu,
                other => return Err(bad("kind", format!("`{other}` is neither CPU nor GPU"))),
            };
            let benchmark = number(file, row, &rec, 2, "benchmark_mark")?;
            if benchmark <= 0.0 {
                return Err(bad("benchmark_mark", format!("{benchmark} must be positive")));
            }
            let tdp = number(file, row, &rec, 3, "tdp_watts")?;
            if tdp <= 0.0 {
                return Err(bad("tdp_watts", format!("{tdp} must be positive")));
            }
            let stated = number(file, row, &rec, 4, "power_performance")?;
            let profile = HardwareProfile::new(model, kind, benchmark, tdp)?;
            // Stored column must agree with mark / TDP to 4 significant digits.
            if ((profile.power_performance - stated) / stated).abs() > 5e-4 {
                return Err(bad(
                    "power_performance",
                    format!("{stated} disagrees with {benchmark} / {tdp} = {}", profile.power_performance),
                ));
            }
            if profiles.insert(model_key(model), profile).is_some() {
                return Err(bad("model", format!("duplicate model `{model}`")));
            }
        }
        if profiles.is_empty() {
            return Err(Error::DataFile {
                file: file.into(),
                reason: "table is empty".into(),
            });
        }
        Ok(HardwareTable { profiles })
    }

    pub fn lookup(&self, model: &str) -> Result<&HardwareProfile> {
        self.profiles
            .get(&model_key(model))
            .ok_or_else(|| Error::UnknownHardware(model.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &HardwareProfile> {
        self.profiles.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cidr {
    network: u128,
    prefix_len: u8,
    v6: bool,
}

impl Cidr {
    fn parse(text: &str) -> Option<Cidr> {
        let (addr, len) = text.split_once('/')?;
        let addr: IpAddr = addr.parse().ok()?;
        let len: u8 = len.parse().ok()?;
        let (bits, v6) = ip_bits(addr);
        let max = if v6 { 128 } else { 32 };
        if len > max {
            return None;
        }
        Some(Cidr {
            network: bits & mask(len, v6),
            prefix_len: len,
            v6,
        })
    }

    fn contains(&self, addr: IpAddr) -> bool {
        let (bits, v6) = ip_bits(addr);
        v6 == self.v6 && bits & mask(self.prefix_len, v6) == self.network
    }
}

fn ip_bits(addr: IpAddr) -> (u128, bool) {
    match addr {
        IpAddr::V4(a) => (u32::from(a) as u128, false),
        IpAddr::V6(a) => (u128::from(a), true),
    }
}

fn mask(len: u8, v6: bool) -> u128 {
    let (width, ones) = if v6 { (128, u128::MAX) } else { (32, u32::MAX as u128) };
    if len == 0 {
        0
    } else {
        ones & (ones << (width - len as u32))
    }
}

/// Address → country mapping. Prefixes are CIDR blocks for IP addresses,
/// or plain string prefixes for anything else (e.g. host names).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocationMap {
    networks: Vec<(Cidr, String)>,
    literals: Vec<(String, String)>,
}

impl LocationMap {
    pub fn from_csv_str(text: &str, file: &str) -> Result<Self> {
        let mut rdr = reader(text);
        check_header(file, &mut rdr, &LOCATIONS_HEADER)?;
        let mut map = LocationMap::default();
        for (row, rec) in rows(file, &mut rdr)? {
            let prefix = field(file, row, &rec, 0, "prefix")?;
            let code = field(file, row, &rec, 1, "country_code")?;
            if !is_country_code(code) {
                return Err(Error::DataRow {
                    file: file.into(),
                    row,
                    column: "country_code".into(),
                    reason: format!("`{code}` is not a two-letter code"),
                });
            }
            if prefix.is_empty() {
                return Err(Error::DataRow {
                    file: file.into(),
                    row,
                    column: "prefix".into(),
                    reason: "empty prefix".into(),
                });
            }
            let code = code.to_ascii_uppercase();
            if prefix.contains('/') {
                let cidr = Cidr::parse(prefix).ok_or_else(|| Error::DataRow {
                    file: file.into(),
                    row,
                    column: "prefix".into(),
                    reason: format!("`{prefix}` is not a valid CIDR block"),
                })?;
                map.networks.push((cidr, code));
            } else {
                map.literals.push((prefix.to_string(), code));
            }
        }
        Ok(map)
    }

    /// Longest-prefix match; `None` when nothing matches.
    pub fn lookup(&self, addr: &str) -> Option<&str> {
        if let Ok(ip) = addr.parse::<IpAddr>() {
            return self
                .networks
                .iter()
                .filter(|(net, _)| net.contains(ip))
                .max_by_key(|(net, _)| net.prefix_len)
                .map(|(_, code)| code.as_str());
        }
        self.literals
            .iter()
            .filter(|(p, _)| addr.starts_with(p.as_str()))
            .max_by_key(|(p, _)| p.len())
            .map(|(_, code)| code.as_str())
    }
}

/// Loaded reference tables; immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceData {
    pub grid: GridIntensityTable,
    pub hardware: HardwareTable,
    pub locations: LocationMap,
}

impl ReferenceData {
    pub fn bundled() -> Result<Self> {
        Ok(ReferenceData {
            grid: GridIntensityTable::from_csv_str(BUNDLED_GRID, GRID_FILE)?,
            hardware: HardwareTable::from_csv_str(BUNDLED_HARDWARE, HARDWARE_FILE)?,
            locations: LocationMap::from_csv_str(BUNDLED_LOCATIONS, LOCATIONS_FILE)?,
        })
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::DataFile {
                file: path.display().to_string(),
                reason: e.to_string(),
            })
        };
        let name = |n: &str| dir.join(n).display().to_string();
        Ok(ReferenceData {
            grid: GridIntensityTable::from_csv_str(&read(GRID_FILE)?, &name(GRID_FILE))?,
            hardware: HardwareTable::from_csv_str(&read(HARDWARE_FILE)?, &name(HARDWARE_FILE))?,
            locations: LocationMap::from_csv_str(&read(LOCATIONS_FILE)?, &name(LOCATIONS_FILE))?,
        })
    }

    /// The directory in `FEDSUST_DATA_DIR` if set, otherwise the bundled tables.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::load_dir(Path::new(&dir)),
            _ => Self::bundled(),
        }
    }

    pub fn lookup_intensity(&self, country: &str) -> Result<f64> {
        self.grid.lookup(country)
    }

    /// Resolves a location to a country code present in the grid table.
    ///
    /// Two-letter codes pass through; anything else goes through the
    /// location map. There is no fallback country.
    pub fn resolve_location(&self, addr: &str) -> Result<String> {
        let addr = addr.trim();
        if is_country_code(addr) {
            let code = addr.to_ascii_uppercase();
            self.grid.lookup(&code)?;
            return Ok(code);
        }
        let code = self
            .locations
            .lookup(addr)
            .ok_or_else(|| Error::UnresolvableLocation(addr.to_string()))?;
        self.grid.lookup(code)?;
        Ok(code.to_string())
    }

    /// Grid intensity for any location accepted by [`resolve_location`](Self::resolve_location).
    pub fn intensity_at(&self, location: &str) -> Result<f64> {
        let code = self.resolve_location(location)?;
        self.grid.lookup(&code)
    }
}
