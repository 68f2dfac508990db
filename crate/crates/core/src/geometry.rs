//! Cell layout, terminal drops and large-scale fading snapshots.
//!
//! Cells are flat-top hexagons with circumradius `cell_radius_m`. The center
//! cell sits at the origin; for seven cells the first ring surrounds it with
//! no wraparound, so the outer cells only act as interferers for the center.
//!
//! Large-scale fading is `beta = z / (r / r_h)^nu` with `10 log10 z` drawn
//! from `Normal(0, shadow_std_db^2)`, independently for every
//! (base station, cell, terminal) triple. Noise power is 1, so `beta` is a
//! dimensionless SNR-like gain.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Network and propagation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of cells `L`.
    pub cells: usize,
    /// Base-station antennas per cell `N`.
    pub antennas: usize,
    /// Terminals per cell `K`.
    pub terminals: usize,
    /// Coherence interval `T` in symbols.
    pub coherence_length: usize,
    pub cell_radius_m: f64,
    /// No terminal is dropped closer than this to its own base station.
    pub exclusion_radius_m: f64,
    pub shadow_std_db: f64,
    pub pathloss_exponent: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            cells: 7,
            antennas: 100,
            terminals: 10,
            coherence_length: 200,
            cell_radius_m: 1000.0,
            exclusion_radius_m: 200.0,
            shadow_std_db: 8.0,
            pathloss_exponent: 3.8,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !matches!(self.cells, 1 | 7) {
            return Err(Error::UnsupportedLayout { cells: self.cells });
        }
        if self.terminals < 1 {
            return fail("terminals must be at least 1".into());
        }
        if self.antennas <= self.terminals {
            return fail(format!(
                "antennas ({}) must exceed terminals ({})",
                self.antennas, self.terminals
            ));
        }
        if self.terminals >= self.coherence_length {
            return fail(format!(
                "terminals ({}) must be below the coherence length ({})",
                self.terminals, self.coherence_length
            ));
        }
        if !(self.exclusion_radius_m > 0.0) || !self.exclusion_radius_m.is_finite() {
            return fail("exclusion radius must be positive".into());
        }
        if !(self.cell_radius_m > self.exclusion_radius_m) || !self.cell_radius_m.is_finite() {
            return fail("cell radius must exceed the exclusion radius".into());
        }
        if !(self.pathloss_exponent > 0.0) || !self.pathloss_exponent.is_finite() {
            return fail("pathloss exponent must be positive".into());
        }
        if !(self.shadow_std_db >= 0.0) || !self.shadow_std_db.is_finite() {
            return fail("shadowing standard deviation must be non-negative".into());
        }
        Ok(())
    }
}

/// On-disk configuration: the system parameters plus the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub cells: usize,
    pub antennas: usize,
    pub terminals: usize,
    pub coherence_length: usize,
    pub cell_radius_m: f64,
    pub exclusion_radius_m: f64,
    pub shadow_std_db: f64,
    pub pathloss_exponent: f64,
    pub seed: u64,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        file.system().validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn system(&self) -> SystemConfig {
        SystemConfig {
            cells: self.cells,
            antennas: self.antennas,
            terminals: self.terminals,
            coherence_length: self.coherence_length,
            cell_radius_m: self.cell_radius_m,
            exclusion_radius_m: self.exclusion_radius_m,
            shadow_std_db: self.shadow_std_db,
            pathloss_exponent: self.pathloss_exponent,
        }
    }
}

/// Base-station positions. One cell sits at the origin; seven cells add the
/// first ring at distance `sqrt(3) * radius`, at angles `30 + 60 j` degrees.
pub fn hexagonal_layout(cells: usize, radius: f64) -> Result<Vec<Point>> {
    match cells {
        1 => Ok(vec![Point::default()]),
        7 => {
            let spacing = SQRT_3 * radius;
            let mut sites = vec![Point::default()];
            sites.extend((0..6).map(|j| {
                let angle = (30.0 + 60.0 * j as f64).to_radians();
                Point::new(spacing * angle.cos(), spacing * angle.sin())
            }));
            Ok(sites)
        }
        _ => Err(Error::UnsupportedLayout { cells }),
    }
}

/// Index of the cell at the origin.
pub const fn center_cell() -> usize {
    0
}

/// Whether `offset` (relative to the hexagon center) lies in a flat-top
/// hexagon of circumradius `radius`. Boundary points count as inside.
pub fn in_hexagon(offset: Point, radius: f64) -> bool {
    let (x, y) = (offset.x.abs(), offset.y.abs());
    y <= 0.5 * SQRT_3 * radius && SQRT_3 * x + y <= SQRT_3 * radius
}

/// Uniform draw over the hexagon minus the exclusion disk, relative to the
/// cell center. Rejection sampling from the bounding box.
pub fn sample_terminal_offset<R: Rng + ?Sized>(rng: &mut R, radius: f64, exclusion: f64) -> Point {
    let half_height = 0.5 * SQRT_3 * radius;
    loop {
        let p = Point::new(
            rng.random_range(-radius..=radius),
            rng.random_range(-half_height..=half_height),
        );
        if in_hexagon(p, radius) && p.norm() >= exclusion {
            return p;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalPlacement {
    pub base_stations: Vec<Point>,
    /// `positions[i][k]`: terminal `k` of cell `i`, global frame.
    pub positions: Vec<Vec<Point>>,
}

impl TerminalPlacement {
    pub fn cells(&self) -> usize {
        self.base_stations.len()
    }
}

pub fn place_terminals_with<R: Rng + ?Sized>(
    config: &SystemConfig,
    rng: &mut R,
) -> Result<TerminalPlacement> {
    config.validate()?;
    let base_stations = hexagonal_layout(config.cells, config.cell_radius_m)?;
    let positions = base_stations
        .iter()
        .map(|bs| {
            (0..config.terminals)
                .map(|_| {
                    let off = sample_terminal_offset(rng, config.cell_radius_m, config.exclusion_radius_m);
                    Point::new(bs.x + off.x, bs.y + off.y)
                })
                .collect()
        })
        .collect();
    Ok(TerminalPlacement {
        base_stations,
        positions,
    })
}

pub fn place_terminals(config: &SystemConfig, seed: u64) -> Result<TerminalPlacement> {
    place_terminals_with(config, &mut substream(seed, Domain::Placement, 0))
}

/// Large-scale fading tensor `beta[l][i][k]`: base station `l`, terminal `k`
/// of cell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingSnapshot {
    cells: usize,
    terminals: usize,
    beta: Vec<f64>,
}

impl FadingSnapshot {
    /// Builds a snapshot from a flat `L * L * K` row-major buffer.
    pub fn new(cells: usize, terminals: usize, beta: Vec<f64>) -> Result<Self> {
        if cells == 0 || terminals == 0 {
            return Err(Error::InvalidSnapshot("empty dimensions".into()));
        }
        if beta.len() != cells * cells * terminals {
            return Err(Error::InvalidSnapshot(format!(
                "expected {} entries, got {}",
                cells * cells * terminals,
                beta.len()
            )));
        }
        if let Some(bad) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::InvalidSnapshot(format!("non-positive or non-finite entry {bad}")));
        }
        Ok(Self {
            cells,
            terminals,
            beta,
        })
    }

    pub fn from_fn(cells: usize, terminals: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut beta = Vec::with_capacity(cells * cells * terminals);
        for l in 0..cells {
            for i in 0..cells {
                for k in 0..terminals {
                    beta.push(f(l, i, k));
                }
            }
        }
        Self::new(cells, terminals, beta)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn terminals(&self) -> usize {
        self.terminals
    }

    #[inline]
    pub fn beta(&self, bs: usize, cell: usize, terminal: usize) -> f64 {
        self.beta[(bs * self.cells + cell) * self.terminals + terminal]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }
}

pub fn large_scale_fading_with<R: Rng + ?Sized>(
    placement: &TerminalPlacement,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<FadingSnapshot> {
    let cells = placement.cells();
    let terminals = config.terminals;
    let shadow = Normal::new(0.0, config.shadow_std_db)
        .map_err(|e| Error::InvalidConfig(format!("shadowing: {e}")))?;
    let mut beta = Vec::with_capacity(cells * cells * terminals);
    for (l, bs) in placement.base_stations.iter().enumerate() {
        for (i, cell) in placement.positions.iter().enumerate() {
            for (k, terminal) in cell.iter().enumerate() {
                let r = bs.distance(terminal);
                if r == 0.0 {
                    return Err(Error::DegeneratePlacement { bs: l, cell: i, terminal: k });
                }
                let z = 10f64.powf(shadow.sample(rng) / 10.0);
                beta.push(z / (r / config.exclusion_radius_m).powf(config.pathloss_exponent));
            }
        }
    }
    FadingSnapshot::new(cells, terminals, beta)
}

pub fn large_scale_fading(
    placement: &TerminalPlacement,
    config: &SystemConfig,
    seed: u64,
) -> Result<FadingSnapshot> {
    large_scale_fading_with(placement, config, &mut substream(seed, Domain::Shadowing, 0))
}

/// Snapshot number `index` under `seed`: placement and shadowing each come
/// from their own substream, so both are redrawn for every index.
pub fn generate_snapshot(config: &SystemConfig, seed: u64, index: u64) -> Result<FadingSnapshot> {
    let placement = place_terminals_with(config, &mut substream(seed, Domain::Placement, index))?;
    large_scale_fading_with(&placement, config, &mut substream(seed, Domain::Shadowing, index))
}

/// Mean distance to the center of a uniform point on the hexagon minus the
/// exclusion disk, by quadrature in polar coordinates. Test oracle for the
/// rejection sampler.
pub fn mean_terminal_distance(radius: f64, exclusion: f64, steps: usize) -> f64 {
    let apothem = 0.5 * SQRT_3 * radius;
    // Boundary radius along direction theta; edge normals at 30 + 60 j degrees.
    let boundary = |theta: f64| {
        let sector = PI / 3.0;
        let rel = (theta - PI / 6.0).rem_euclid(sector) - sector / 2.0;
        apothem / rel.cos()
    };
    let h = 2.0 * PI / steps as f64;
    let (mut first, mut zeroth) = (0.0, 0.0);
    for s in 0..steps {
        let rho = boundary((s as f64 + 0.5) * h);
        first += (rho.powi(3) - exclusion.powi(3)) / 3.0;
        zeroth += (rho.powi(2) - exclusion.powi(2)) / 2.0;
    }
    first / zeroth
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn zero_shadow(cells: usize) -> SystemConfig {
        SystemConfig {
            cells,
            shadow_std_db: 0.0,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn single_cell_layout() {
        assert_eq!(hexagonal_layout(1, 1000.0).unwrap(), vec![Point::new(0.0, 0.0)]);
    }

    #[test]
    fn seven_cell_ring_is_regular() {
        let sites = hexagonal_layout(7, 1000.0).unwrap();
        assert_eq!(sites.len(), 7);
        assert_eq!(sites[0], Point::default());
        let d = 1000.0 * 3f64.sqrt();
        for j in 1..7 {
            assert_relative_eq!(sites[j].norm(), d, max_relative = 1e-12);
            let next = if j == 6 { 1 } else { j + 1 };
            // neighbors in the ring are also sqrt(3) r_c apart
            assert_relative_eq!(sites[j].distance(&sites[next]), d, max_relative = 1e-12);
        }
        assert_relative_eq!(d, 1732.0508, epsilon = 1e-3);
    }

    #[test]
    fn other_cell_counts_rejected() {
        for cells in [0, 2, 3, 19] {
            assert!(matches!(
                hexagonal_layout(cells, 1000.0),
                Err(Error::UnsupportedLayout { .. })
            ));
        }
    }

    #[test]
    fn neighbor_hexagons_tile_without_overlap() {
        // a point just inside the shared edge of cells 0 and 1 belongs to exactly one
        let sites = hexagonal_layout(7, 1000.0).unwrap();
        let mid = Point::new(sites[1].x / 2.0, sites[1].y / 2.0);
        let inside0 = Point::new(mid.x * 0.999, mid.y * 0.999);
        assert!(in_hexagon(inside0, 1000.0));
        let rel1 = Point::new(inside0.x - sites[1].x, inside0.y - sites[1].y);
        assert!(!in_hexagon(rel1, 1000.0));
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::default().validate().is_ok());
        let bad = [
            SystemConfig { antennas: 10, ..Default::default() },
            SystemConfig { coherence_length: 10, ..Default::default() },
            SystemConfig { terminals: 0, ..Default::default() },
            SystemConfig { exclusion_radius_m: 0.0, ..Default::default() },
            SystemConfig { cell_radius_m: 200.0, ..Default::default() },
            SystemConfig { pathloss_exponent: 0.0, ..Default::default() },
            SystemConfig { shadow_std_db: -1.0, ..Default::default() },
            SystemConfig { shadow_std_db: f64::NAN, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn placement_respects_region() {
        let cfg = SystemConfig::default();
        for seed in 0..20 {
            let placement = place_terminals(&cfg, seed).unwrap();
            for (bs, cell) in placement.base_stations.iter().zip(&placement.positions) {
                assert_eq!(cell.len(), cfg.terminals);
                for p in cell {
                    assert!(p.distance(bs) >= 200.0);
                    assert!(in_hexagon(Point::new(p.x - bs.x, p.y - bs.y), cfg.cell_radius_m));
                }
            }
        }
    }

    #[test]
    fn placement_is_deterministic() {
        let cfg = SystemConfig::default();
        assert_eq!(place_terminals(&cfg, 9).unwrap(), place_terminals(&cfg, 9).unwrap());
        assert_ne!(place_terminals(&cfg, 9).unwrap(), place_terminals(&cfg, 10).unwrap());
    }

    #[test]
    fn mean_distance_matches_quadrature() {
        let oracle = mean_terminal_distance(1000.0, 200.0, 200_000);
        let mut rng = substream(1, Domain::Placement, 0);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_terminal_offset(&mut rng, 1000.0, 200.0).norm())
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(mean, oracle, max_relative = 0.01);
        assert!(oracle > 500.0 && oracle < 800.0);
    }

    #[test]
    fn polar_quadrature_matches_cartesian_grid() {
        let r = 1.0;
        let mean = mean_terminal_distance(r, 0.2, 400_000);
        let n = 2000;
        let (hw, hh) = (r, 0.5 * 3f64.sqrt() * r);
        let (mut s, mut c) = (0.0, 0usize);
        for a in 0..n {
            for b in 0..n {
                let p = Point::new(-hw + (a as f64 + 0.5) * 2.0 * hw / n as f64, -hh + (b as f64 + 0.5) * 2.0 * hh / n as f64);
                if in_hexagon(p, r) && p.norm() >= 0.2 {
                    s += p.norm();
                    c += 1;
                }
            }
        }
        assert_relative_eq!(mean, s / c as f64, max_relative = 1e-4);
    }

    #[test]
    fn pathloss_at_exclusion_radius_is_unity() {
        let cfg = zero_shadow(1);
        let placement = TerminalPlacement {
            base_stations: vec![Point::default()],
            positions: vec![(0..cfg.terminals).map(|_| Point::new(200.0, 0.0)).collect()],
        };
        let snap = large_scale_fading(&placement, &cfg, 0).unwrap();
        assert_eq!(snap.as_slice().len(), cfg.terminals);
        for k in 0..cfg.terminals {
            assert_relative_eq!(snap.beta(0, 0, k), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn pathloss_at_twice_exclusion_radius() {
        let cfg = zero_shadow(1);
        let placement = TerminalPlacement {
            base_stations: vec![Point::default()],
            positions: vec![(0..cfg.terminals).map(|_| Point::new(0.0, 400.0)).collect()],
        };
        let snap = large_scale_fading(&placement, &cfg, 0).unwrap();
        assert_relative_eq!(snap.beta(0, 0, 0), 2f64.powf(-3.8), max_relative = 1e-14);
        assert_relative_eq!(snap.beta(0, 0, 0), 0.0718, epsilon = 1e-4);
    }

    #[test]
    fn coincident_terminal_is_degenerate() {
        let cfg = zero_shadow(1);
        let mut positions = vec![Point::new(300.0, 0.0); cfg.terminals];
        positions[3] = Point::default();
        let placement = TerminalPlacement {
            base_stations: vec![Point::default()],
            positions: vec![positions],
        };
        assert!(matches!(
            large_scale_fading(&placement, &cfg, 0),
            Err(Error::DegeneratePlacement { bs: 0, cell: 0, terminal: 3 })
        ));
    }

    #[test]
    fn shadowing_statistics() {
        // L=7, K=10 gives 490 draws per snapshot
        let cfg = SystemConfig::default();
        let placement = place_terminals(&cfg, 3).unwrap();
        let mut flat = zero_shadow(7);
        flat.terminals = cfg.terminals;
        let mut samples = Vec::new();
        let mut idx = 0;
        while samples.len() < 100_000 {
            let shadowed = large_scale_fading_with(&placement, &cfg, &mut substream(3, Domain::Shadowing, idx)).unwrap();
            let clean = large_scale_fading(&placement, &flat, 0).unwrap();
            samples.extend(
                shadowed
                    .as_slice()
                    .iter()
                    .zip(clean.as_slice())
                    .map(|(s, c)| 10.0 * (s / c).log10()),
            );
            idx += 1;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((std - 8.0).abs() < 0.1, "std {std}");
    }

    #[test]
    fn snapshot_shape_and_determinism() {
        let cfg = SystemConfig::default();
        let a = generate_snapshot(&cfg, 42, 5).unwrap();
        assert_eq!(a, generate_snapshot(&cfg, 42, 5).unwrap());
        assert_ne!(a, generate_snapshot(&cfg, 42, 6).unwrap());
        assert_eq!(a.as_slice().len(), 7 * 7 * 10);
        let single = generate_snapshot(&SystemConfig { cells: 1, ..cfg }, 42, 0).unwrap();
        assert_eq!((single.cells(), single.terminals()), (1, 10));
        assert_eq!(single.as_slice().len(), 10);
    }

    #[test]
    fn unshadowed_fading_decreases_with_distance() {
        let cfg = zero_shadow(7);
        let placement = place_terminals(&cfg, 11).unwrap();
        let snap = large_scale_fading(&placement, &cfg, 0).unwrap();
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for (l, bs) in placement.base_stations.iter().enumerate() {
            for (i, cell) in placement.positions.iter().enumerate() {
                for (k, p) in cell.iter().enumerate() {
                    pairs.push((bs.distance(p), snap.beta(l, i, k)));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            if w[1].0 > w[0].0 {
                assert!(w[1].1 < w[0].1);
            }
        }
    }

    #[test]
    fn snapshot_rejects_bad_entries() {
        assert!(FadingSnapshot::new(1, 2, vec![1.0]).is_err());
        assert!(FadingSnapshot::new(1, 2, vec![1.0, 0.0]).is_err());
        assert!(FadingSnapshot::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
        assert!(FadingSnapshot::new(1, 2, vec![1.0, 0.5]).is_ok());
    }

    #[test]
    fn config_file_round_trip() {
        let text = r#"
cells = 7
antennas = 100
terminals = 10
coherence_length = 200
cell_radius_m = 1000.0
exclusion_radius_m = 200.0
shadow_std_db = 8.0
pathloss_exponent = 3.8
seed = 17
"#;
        let file = ConfigFile::parse(text, Path::new("inline")).unwrap();
        assert_eq!(file.system(), SystemConfig::default());
        assert_eq!(file.seed, 17);
        let extra = format!("{text}bogus = 1\n");
        assert!(matches!(ConfigFile::parse(&extra, Path::new("inline")), Err(Error::ConfigParse { .. })));
        let missing = text.replace("seed = 17", "");
        assert!(ConfigFile::parse(&missing, Path::new("inline")).is_err());
    }
}
