//! Propeller parameterization: six radial feature curves on a fixed grid of
//! 27 normalized radii, plus diameter and blade count.
//!
//! All length-like features are nondimensional (fractions of the diameter,
//! or of the chord for camber), so one [`DesignVector`] serves any diameter.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const N_STATIONS: usize = 27;
pub const N_FEATURES: usize = 6;
pub const DESIGN_DIM: usize = N_STATIONS * N_FEATURES;

pub const HUB_RADIUS: f64 = 0.20;
pub const TIP_RADIUS: f64 = 1.00;

/// Upper bound on |max camber| (fraction of chord) for a physical section.
pub const MAX_CAMBER_LIMIT: f64 = 0.2;

/// The shared radial grid: 27 uniformly spaced normalized radii from hub to tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    stations: [f64; N_STATIONS],
}

impl RadialGrid {
    pub fn standard() -> Self {
        let step = (TIP_RADIUS - HUB_RADIUS) / (N_STATIONS - 1) as f64;
        let mut stations = [0.0; N_STATIONS];
        for (i, r) in stations.iter_mut().enumerate() {
            *r = HUB_RADIUS + step * i as f64;
        }
        stations[N_STATIONS - 1] = TIP_RADIUS;
        Self { stations }
    }

    pub fn stations(&self) -> &[f64; N_STATIONS] {
        &self.stations
    }

    pub fn radius(&self, station: usize) -> f64 {
        self.stations[station]
    }

    /// Index of the grid interval containing `r`, and the linear weight of its
    /// upper node.
    fn locate(&self, r: f64) -> Result<(usize, f64)> {
        const EDGE_TOL: f64 = 1e-12;
        if !(HUB_RADIUS - EDGE_TOL..=TIP_RADIUS + EDGE_TOL).contains(&r) {
            return Err(Error::RadiusOutOfRange(r));
        }
        let r = r.clamp(HUB_RADIUS, TIP_RADIUS);
        let step = (TIP_RADIUS - HUB_RADIUS) / (N_STATIONS - 1) as f64;
        let mut lo = (((r - HUB_RADIUS) / step).floor() as usize).min(N_STATIONS - 2);
        // guard against floor() landing one interval off near a node
        if r < self.stations[lo] {
            lo -= 1;
        } else if r > self.stations[lo + 1] && lo + 2 < N_STATIONS {
            lo += 1;
        }
        let (a, b) = (self.stations[lo], self.stations[lo + 1]);
        Ok((lo, (r - a) / (b - a)))
    }
}

impl Default for RadialGrid {
    fn default() -> Self {
        Self::standard()
    }
}

/// The six radial features, in flattening order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    /// Chord length, fraction of D.
    Chord,
    /// Skew angle, degrees.
    Skew,
    /// Maximum section thickness, fraction of D.
    MaxThickness,
    /// Axial rake, fraction of D.
    Rake,
    /// Pitch ratio P/D.
    Pitch,
    /// Maximum camber, fraction of chord.
    MaxCamber,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::Chord,
        Feature::Skew,
        Feature::MaxThickness,
        Feature::Rake,
        Feature::Pitch,
        Feature::MaxCamber,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Chord => "chord",
            Feature::Skew => "skew",
            Feature::MaxThickness => "max_thickness",
            Feature::Rake => "rake",
            Feature::Pitch => "pitch",
            Feature::MaxCamber => "max_camber",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A blade described by six radial curves. Flat index `k = 27 * feature + station`.
#[derive(Clone, PartialEq)]
pub struct DesignVector {
    values: [f64; DESIGN_DIM],
}

impl fmt::Debug for DesignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("DesignVector");
        for feat in Feature::ALL {
            s.field(feat.name(), &self.feature(feat));
        }
        s.finish()
    }
}

impl serde::Serialize for DesignVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.as_slice().serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for DesignVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Self::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

impl AsRef<[f64]> for DesignVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

impl Default for DesignVector {
    fn default() -> Self {
        Self::zeros()
    }
}

/// A reason a design fails [`DesignVector::is_physical`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub feature: Feature,
    pub station: usize,
    pub value: f64,
}

impl DesignVector {
    pub fn zeros() -> Self {
        Self { values: [0.0; DESIGN_DIM] }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != DESIGN_DIM {
            return Err(Error::Shape { expected: DESIGN_DIM, got: v.len() });
        }
        let mut values = [0.0; DESIGN_DIM];
        values.copy_from_slice(v);
        Ok(Self { values })
    }

    pub fn from_features(features: [[f64; N_STATIONS]; N_FEATURES]) -> Self {
        let mut d = Self::zeros();
        for (f, curve) in features.iter().enumerate() {
            d.values[f * N_STATIONS..(f + 1) * N_STATIONS].copy_from_slice(curve);
        }
        d
    }

    /// Flattened 162-vector in the fixed `[chord, skew, thickness, rake, pitch, camber]` order.
    pub fn flatten(&self) -> [f64; DESIGN_DIM] {
        self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn feature(&self, f: Feature) -> &[f64] {
        let i = f.index() * N_STATIONS;
        &self.values[i..i + N_STATIONS]
    }

    pub fn feature_mut(&mut self, f: Feature) -> &mut [f64] {
        let i = f.index() * N_STATIONS;
        &mut self.values[i..i + N_STATIONS]
    }

    pub fn get(&self, f: Feature, station: usize) -> f64 {
        self.values[f.index() * N_STATIONS + station]
    }

    pub fn set(&mut self, f: Feature, station: usize, value: f64) {
        self.values[f.index() * N_STATIONS + station] = value;
    }

    /// Piecewise-linear value of `feature` at normalized radius `r`.
    pub fn interp_feature(&self, feature: Feature, r: f64) -> Result<f64> {
        let grid = RadialGrid::standard();
        let (lo, w) = grid.locate(r)?;
        let curve = self.feature(feature);
        if w == 0.0 {
            return Ok(curve[lo]);
        }
        if w == 1.0 {
            return Ok(curve[lo + 1]);
        }
        Ok(curve[lo] + w * (curve[lo + 1] - curve[lo]))
    }

    /// All physical-bound violations: chord > 0 at interior stations (>= 0 at
    /// the tip), thickness > 0, pitch > 0, |camber| < 0.2, every value finite.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for feat in Feature::ALL {
            for (station, &value) in self.feature(feat).iter().enumerate() {
                let ok = value.is_finite()
                    && match feat {
                        Feature::Chord if station == N_STATIONS - 1 => value >= 0.0,
                        Feature::Chord | Feature::MaxThickness | Feature::Pitch => value > 0.0,
                        Feature::MaxCamber => value.abs() < MAX_CAMBER_LIMIT,
                        Feature::Skew | Feature::Rake => true,
                    };
                if !ok {
                    out.push(Violation { feature: feat, station, value });
                }
            }
        }
        out
    }

    pub fn is_physical(&self) -> bool {
        self.violations().is_empty()
    }

    /// Squared Euclidean distance in raw (unstandardized) coordinates.
    pub fn distance_sq(&self, other: &DesignVector) -> f64 {
        self.values.iter().zip(other.values.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// A design together with its global parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PropellerSpec {
    pub design: DesignVector,
    pub diameter_m: f64,
    pub blades: u32,
}

pub const MIN_DIAMETER: f64 = 0.1;
pub const MAX_DIAMETER: f64 = 10.0;

impl PropellerSpec {
    pub fn new(design: DesignVector, diameter_m: f64, blades: u32) -> Result<Self> {
        if !(MIN_DIAMETER..=MAX_DIAMETER).contains(&diameter_m) {
            return Err(Error::InvalidSpec(format!(
                "diameter {diameter_m} m outside [{MIN_DIAMETER}, {MAX_DIAMETER}]"
            )));
        }
        if blades != 4 && blades != 5 {
            return Err(Error::InvalidSpec(format!("blade count {blades} not in {{4, 5}}")));
        }
        Ok(Self { design, diameter_m, blades })
    }

    /// Blade-area ratio: `B * ∫ c dr̄ / π` over the grid, trapezoidal rule.
    ///
    /// Chord is a fraction of D, so the result does not depend on the diameter.
    pub fn blade_area_ratio(&self) -> f64 {
        blade_area_ratio(&self.design, self.blades)
    }
}

pub fn blade_area_ratio(design: &DesignVector, blades: u32) -> f64 {
    let grid = RadialGrid::standard();
    let integral = trapezoid(grid.stations(), design.feature(Feature::Chord));
    blades as f64 * integral / std::f64::consts::PI
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Reads a design file: either long format with header `feature,station,value`
/// (all 162 entries), a single row of 162 numbers, or a table with columns
/// `d0`..`d161` (extra columns ignored, first row used).
pub fn read_design_file(path: &Path) -> Result<DesignVector> {
    let text = std::fs::read_to_string(path)?;
    parse_design(&text).map_err(|message| Error::Parse { path: path.to_owned(), message })
}

pub fn parse_design(text: &str) -> std::result::Result<DesignVector, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let rows: Vec<_> = rows.into_iter().filter(|r| !(r.len() == 1 && r[0].is_empty())).collect();
    let first = rows.first().ok_or("empty design file")?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));

    if first.len() == 3 && &first[0] == "feature" {
        let mut d = DesignVector::zeros();
        let mut seen = [false; DESIGN_DIM];
        for row in &rows[1..] {
            if row.len() != 3 {
                return Err(format!("expected 3 columns, got {}", row.len()));
            }
            let feat = Feature::from_name(&row[0]).ok_or_else(|| format!("unknown feature {:?}", &row[0]))?;
            let station: usize = row[1].parse().map_err(|e| format!("bad station {:?}: {e}", &row[1]))?;
            if station >= N_STATIONS {
                return Err(format!("station {station} out of range"));
            }
            let k = feat.index() * N_STATIONS + station;
            if seen[k] {
                return Err(format!("duplicate entry {feat},{station}"));
            }
            seen[k] = true;
            d.values[k] = num(&row[2])?;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(format!("missing entry {},{}", Feature::ALL[k / N_STATIONS], k % N_STATIONS));
        }
        return Ok(d);
    }

    if first.get(0).is_some_and(|s| s == "d0") {
        // wide file with a header, possibly with extra columns: first data row
        let row = rows.get(1).ok_or("missing data row")?;
        let values: Vec<f64> = (0..DESIGN_DIM)
            .map(|i| {
                let name = format!("d{i}");
                let col = first.iter().position(|h| h == name).ok_or_else(|| format!("missing column {name}"))?;
                num(row.get(col).ok_or_else(|| format!("short row: no column {name}"))?)
            })
            .collect::<std::result::Result<_, _>>()?;
        return DesignVector::from_slice(&values).map_err(|e| e.to_string());
    }
    let values: Vec<f64> = first.iter().map(num).collect::<std::result::Result<_, _>>()?;
    DesignVector::from_slice(&values).map_err(|e| e.to_string())
}

/// Writes a design in long `feature,station,value` format.
pub fn write_design_file(path: &Path, design: &DesignVector) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "station", "value"])?;
    for feat in Feature::ALL {
        for (station, v) in design.feature(feat).iter().enumerate() {
            w.write_record([feat.name().to_string(), station.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_endpoints_and_spacing() {
        let g = RadialGrid::standard();
        assert_eq!(g.radius(0), 0.20);
        assert_eq!(g.radius(26), 1.00);
        assert!(g.stations().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn flatten_zero_and_basis() {
        assert!(DesignVector::zeros().flatten().iter().all(|&v| v == 0.0));
        let mut d = DesignVector::zeros();
        d.set(Feature::Chord, 0, 0.3);
        let v = d.flatten();
        assert_eq!(v[0], 0.3);
        assert!(v[1..].iter().all(|&x| x == 0.0));
        // pitch[5] lands at 27*4 + 5
        d.set(Feature::Pitch, 5, 1.1);
        assert_eq!(d.flatten()[4 * 27 + 5], 1.1);
    }

    #[test]
    fn interp_exact_at_nodes_and_linear() {
        let mut d = DesignVector::zeros();
        for (i, v) in d.feature_mut(Feature::Pitch).iter_mut().enumerate() {
            *v = 0.7 + 0.01 * i as f64;
        }
        let g = RadialGrid::standard();
        for i in 0..N_STATIONS {
            assert_eq!(d.interp_feature(Feature::Pitch, g.radius(i)).unwrap(), d.get(Feature::Pitch, i));
        }
        d.set(Feature::Pitch, 3, 0.8);
        d.set(Feature::Pitch, 4, 1.0);
        let mid = 0.5 * (g.radius(3) + g.radius(4));
        assert!((d.interp_feature(Feature::Pitch, mid).unwrap() - 0.9).abs() < 1e-14);
    }

    #[test]
    fn interp_constant_and_out_of_range() {
        let mut d = DesignVector::zeros();
        d.feature_mut(Feature::Skew).fill(12.5);
        for r in [0.2, 0.25, 0.6, 0.731, 1.0] {
            assert_eq!(d.interp_feature(Feature::Skew, r).unwrap(), 12.5);
        }
        assert!(matches!(d.interp_feature(Feature::Skew, 0.1), Err(Error::RadiusOutOfRange(_))));
        assert!(d.interp_feature(Feature::Skew, 1.01).is_err());
    }

    #[test]
    fn bar_constant_chord() {
        for b in [4u32, 5] {
            let mut d = DesignVector::zeros();
            d.feature_mut(Feature::Chord).fill(PI / b as f64);
            assert!((blade_area_ratio(&d, b) - 0.8).abs() < 1e-14);
        }
        assert_eq!(blade_area_ratio(&DesignVector::zeros(), 4), 0.0);
    }

    #[test]
    fn bar_linear_in_blades_and_invariant_to_diameter() {
        let mut d = DesignVector::zeros();
        for (i, c) in d.feature_mut(Feature::Chord).iter_mut().enumerate() {
            *c = 0.2 + 0.003 * i as f64;
        }
        let b4 = blade_area_ratio(&d, 4);
        let b5 = blade_area_ratio(&d, 5);
        assert!((b4 / b5 - 0.8).abs() < 1e-14);
        let s1 = PropellerSpec::new(d.clone(), 1.0, 4).unwrap();
        let s2 = PropellerSpec::new(d, 2.3, 4).unwrap();
        assert_eq!(s1.blade_area_ratio(), s2.blade_area_ratio());
    }

    #[test]
    fn spec_validation() {
        assert!(PropellerSpec::new(DesignVector::zeros(), 0.05, 4).is_err());
        assert!(PropellerSpec::new(DesignVector::zeros(), 1.0, 3).is_err());
        assert!(PropellerSpec::new(DesignVector::zeros(), 10.0, 5).is_ok());
    }

    #[test]
    fn physical_predicate() {
        let mut d = DesignVector::zeros();
        d.feature_mut(Feature::Chord).fill(0.2);
        d.feature_mut(Feature::MaxThickness).fill(0.01);
        d.feature_mut(Feature::Pitch).fill(1.0);
        d.feature_mut(Feature::MaxCamber).fill(0.02);
        assert!(d.is_physical());
        d.set(Feature::Chord, 26, 0.0);
        assert!(d.is_physical(), "zero tip chord is allowed");
        d.set(Feature::Chord, 25, 0.0);
        assert!(!d.is_physical());
        d.set(Feature::Chord, 25, 0.1);
        d.set(Feature::MaxCamber, 4, -0.21);
        let v = d.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].feature, Feature::MaxCamber);
        d.set(Feature::MaxCamber, 4, 0.0);
        d.set(Feature::Rake, 2, f64::NAN);
        assert!(!d.is_physical());
    }

    #[test]
    fn design_file_formats() {
        let mut d = DesignVector::zeros();
        for (i, v) in d.as_mut_slice().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin() / 3.0;
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_design_file(&p, &d).unwrap();
        assert_eq!(read_design_file(&p).unwrap(), d);

        let row: Vec<String> = d.as_slice().iter().map(|v| v.to_string()).collect();
        assert_eq!(parse_design(&row.join(",")).unwrap(), d);
        let header: Vec<String> = (0..DESIGN_DIM).map(|i| format!("d{i}")).collect();
        assert_eq!(parse_design(&format!("{}\n{}\n", header.join(","), row.join(","))).unwrap(), d);
        let mut wide = header.clone();
        wide.push("physical".into());
        let mut wrow = row.clone();
        wrow.push("true".into());
        assert_eq!(parse_design(&format!("{}\n{}\n", wide.join(","), wrow.join(","))).unwrap(), d);
        assert!(parse_design("1,2,3").is_err());
        assert!(parse_design("feature,station,value\nchord,0,0.1\n").is_err());
    }

    proptest! {
        #[test]
        fn flatten_roundtrip(v in proptest::collection::vec(-10.0f64..10.0, DESIGN_DIM)) {
            let d = DesignVector::from_slice(&v).unwrap();
            prop_assert_eq!(d.flatten().to_vec(), v.clone());
            prop_assert_eq!(DesignVector::from_slice(&d.flatten()).unwrap(), d);
        }

        #[test]
        fn interp_bounded_by_neighbors(
            v in proptest::collection::vec(-5.0f64..5.0, N_STATIONS),
            r in 0.2f64..=1.0,
        ) {
            let mut d = DesignVector::zeros();
            d.feature_mut(Feature::Rake).copy_from_slice(&v);
            let y = d.interp_feature(Feature::Rake, r).unwrap();
            let g = RadialGrid::standard();
            let (lo, _) = g.locate(r).unwrap();
            let (a, b) = (v[lo], v[lo + 1]);
            prop_assert!(y >= a.min(b) - 1e-12 && y <= a.max(b) + 1e-12);
        }
    }
}
