//! Run configuration: scenario presets at desk scale, the sectioned
//! key-value config file, and the initial-condition builders (including
//! seeded nucleation noise).
//!
//! Config files are TOML with one table per module, and every key has a
//! default, so a file only states what it changes:
//!
//! ```toml
//! scenario = "single-particle-shape"
//! seed = 42
//! t_end = 100.0
//!
//! [grid]
//! dims = [64, 64]
//! h = 0.25
//! bc = "Periodic"
//!
//! [setup]
//! radius = 7.5
//!
//! [model]
//! elastic_scale = 3.0
//!
//! [scheme]
//! kappa_cb = 0.05
//!
//! [output]
//! dir = "out/shape_l3"
//! snapshot_every = 50
//! ```
//!
//! The preset constructors produce the same structure programmatically with
//! the scenario's published numbers filled in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dvd::SchemeConfig;
use crate::grid::{BoundaryCondition, Grid, GridError};
use crate::model::{admissible_point, ModelParameters, ADMISSIBILITY_GUARD};
use crate::solver::{NewtonConfig, SchwarzConfig};
use crate::state::DiscreteState;
use crate::stepper::{AdaptiveConfig, OutputOptions};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid grid: {0}")]
    Grid(#[from] GridError),
}

/// Which initial condition and defaults a run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// One large ordered particle in a near-equilibrium matrix (the
    /// sphere-to-cube shape study).
    SingleParticleShape,
    /// One small particle in a supersaturated matrix (growth/coarsening
    /// rate study).
    SingleParticleCoarsening,
    /// A uniformly perturbed disordered state that nucleates a particle
    /// population.
    Nucleation,
    /// The fixed-step solver benchmark sweep.
    SolverBench,
    /// No preset numbers; everything read from the file.
    Custom,
}

/// Uniform-spacing structured grid specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    pub h: f64,
    pub bc: BoundaryCondition,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { dims: vec![64, 64], h: 0.25, bc: BoundaryCondition::Periodic }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, GridError> {
        Grid::new(&self.dims, &vec![self.h; self.dims.len()], self.bc)
    }

    /// Shortest domain edge, in physical units.
    pub fn min_extent(&self) -> f64 {
        self.dims.iter().map(|&d| d as f64 * self.h).fold(f64::INFINITY, f64::min)
    }
}

/// Scenario-specific knobs. Only the fields relevant to the configured
/// scenario are read; presets fill them with the published numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetupSpec {
    /// Initial particle radius (physical units).
    pub radius: f64,
    pub particle_c: f64,
    pub particle_eta: f64,
    pub matrix_c: f64,
    pub matrix_eta: f64,
    /// Equilibrium volume fraction driving the supersaturation formula
    /// `c = 0.147 + 0.087 vf` (coarsening and nucleation scenarios).
    pub vf: f64,
    /// Nucleation: uniform perturbation amplitude on both fields.
    pub noise: f64,
    /// Nucleation: background order parameter before perturbation.
    pub eta0: f64,
}

impl Default for SetupSpec {
    fn default() -> Self {
        SetupSpec {
            radius: 7.5,
            particle_c: 0.238,
            particle_eta: 0.01,
            matrix_c: 0.1375,
            matrix_eta: 0.99,
            vf: 0.175,
            noise: 0.05,
            eta0: 0.1,
        }
    }
}

/// Matrix supersaturation for a target equilibrium volume fraction.
pub fn supersaturated_c(vf: f64) -> f64 {
    0.147 + 0.087 * vf
}

/// A complete run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub t_end: f64,
    pub max_steps: Option<u64>,
    pub grid: GridSpec,
    pub setup: SetupSpec,
    pub model: ModelParameters,
    pub scheme: SchemeConfig,
    pub newton: NewtonConfig,
    pub schwarz: SchwarzConfig,
    pub adaptive: AdaptiveConfig,
    pub output: OutputOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: Scenario::SingleParticleShape,
            seed: 0,
            t_end: 100.0,
            max_steps: None,
            grid: GridSpec::default(),
            setup: SetupSpec::default(),
            model: ModelParameters::default(),
            scheme: SchemeConfig::default(),
            newton: NewtonConfig::default(),
            schwarz: SchwarzConfig::default(),
            adaptive: AdaptiveConfig::default(),
            output: OutputOptions::default(),
        }
    }
}

/// Single-particle shape study: an ordered particle of radius 7.5 with
/// `(c, eta) = (0.238, 0.01)` in a `(0.1375, 0.99)` matrix, h = 0.25, with
/// the elastic multiplier `l_scale` (0 disables elasticity). Pass an empty
/// `dims` for the desk default of 64x64. When the domain is too small for
/// the published radius, the particle shrinks proportionally to keep the
/// published particle-to-domain ratio.
pub fn preset_single_particle(l_scale: f64, dims: &[usize]) -> ScenarioConfig {
    let mut cfg = ScenarioConfig { scenario: Scenario::SingleParticleShape, ..Default::default() };
    if !dims.is_empty() {
        cfg.grid.dims = dims.to_vec();
    }
    cfg.setup.radius = 7.5f64.min(7.5 * cfg.grid.min_extent() / 16.0);
    cfg.model.elastic_scale = l_scale;
    cfg.scheme.kappa_cb = if l_scale > 0.0 { 0.05 } else { 0.0 };
    cfg
}

/// Single-particle coarsening/growth study: a small particle (radius 1.5,
/// c = 0.234) in a matrix supersaturated for the volume fraction `vf`.
pub fn preset_coarsening(vf: f64) -> ScenarioConfig {
    let mut cfg =
        ScenarioConfig { scenario: Scenario::SingleParticleCoarsening, ..Default::default() };
    cfg.setup.radius = 1.5;
    cfg.setup.particle_c = 0.234;
    cfg.setup.vf = vf;
    cfg.setup.matrix_c = supersaturated_c(vf);
    cfg
}

/// Nucleation study: `(c, eta) = (cbar + dc, 0.1 + de)` with i.i.d. uniform
/// perturbations in [-0.05, 0.05] from the seeded generator; desk default
/// grid 128x128x8.
pub fn preset_nucleation(vf: f64, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig { scenario: Scenario::Nucleation, ..Default::default() };
    cfg.grid.dims = vec![128, 128, 8];
    cfg.seed = seed;
    cfg.setup.vf = vf;
    cfg.setup.matrix_c = supersaturated_c(vf);
    cfg
}

/// Solver benchmark: the single-particle configuration frozen at one time
/// step, swept over preconditioner variants by the bench harness.
pub fn preset_solver_bench(l_scale: f64) -> ScenarioConfig {
    let mut cfg = preset_single_particle(l_scale, &[]);
    cfg.scenario = Scenario::SolverBench;
    cfg
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<ScenarioConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        ScenarioConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Cross-field checks beyond what each sub-config enforces locally.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.adaptive.validate().map_err(ConfigError::Invalid)?;
        self.grid.build()?;
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(ConfigError::Invalid(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if self.model.elastic_scale < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "elastic_scale must be >= 0, got {}",
                self.model.elastic_scale
            )));
        }
        if self.scheme.kappa_cb < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "kappa_cb must be >= 0, got {}",
                self.scheme.kappa_cb
            )));
        }
        let s = &self.setup;
        match self.scenario {
            Scenario::SingleParticleShape
            | Scenario::SingleParticleCoarsening
            | Scenario::SolverBench
            | Scenario::Custom => {
                if !(s.radius > 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "particle radius must be positive, got {}",
                        s.radius
                    )));
                }
                if 2.0 * s.radius >= self.grid.min_extent() {
                    return Err(ConfigError::Invalid(format!(
                        "particle diameter {} does not fit the shortest domain edge {}",
                        2.0 * s.radius,
                        self.grid.min_extent()
                    )));
                }
                for (what, c, eta) in [
                    ("particle", s.particle_c, s.particle_eta),
                    ("matrix", s.matrix_c, s.matrix_eta),
                ] {
                    if !admissible_point(c, eta, ADMISSIBILITY_GUARD) {
                        return Err(ConfigError::Invalid(format!(
                            "{what} state (c, eta) = ({c}, {eta}) is outside the admissible set"
                        )));
                    }
                }
            }
            Scenario::Nucleation => {
                if !(s.noise >= 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "noise amplitude must be >= 0, got {}",
                        s.noise
                    )));
                }
                // Admissibility is monotone in both arguments, so the four
                // perturbation corners bound the whole rectangle.
                for dc in [-s.noise, s.noise] {
                    for de in [-s.noise, s.noise] {
                        let (c, eta) = (s.matrix_c + dc, s.eta0 + de);
                        if !admissible_point(c, eta, ADMISSIBILITY_GUARD) {
                            return Err(ConfigError::Invalid(format!(
                                "perturbed state (c, eta) = ({c}, {eta}) can leave the admissible set"
                            )));
                        }
                    }
                }
                if self.model.elastic_scale > 0.0 {
                    return Err(ConfigError::Invalid(
                        "the nucleation scenario runs without elasticity".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Ok(self.grid.build()?)
    }

    /// Build the scenario's initial fields. Displacement components are
    /// added (zeroed) whenever elasticity is active; the stepper relaxes
    /// them to mechanical equilibrium on construction.
    pub fn initial_state(&self, grid: &Grid) -> DiscreteState {
        let n = grid.ncells();
        let s = &self.setup;
        let (c, eta) = match self.scenario {
            Scenario::Nucleation => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut c = Vec::with_capacity(n);
                let mut eta = Vec::with_capacity(n);
                for _ in 0..n {
                    c.push(s.matrix_c + rng.gen_range(-s.noise..=s.noise));
                    eta.push(s.eta0 + rng.gen_range(-s.noise..=s.noise));
                }
                (c, eta)
            }
            _ => {
                let dims = grid.dims();
                let h = grid.spacing();
                let d = grid.ndim();
                let center: Vec<f64> =
                    (0..d).map(|a| 0.5 * dims[a] as f64 * h[a]).collect();
                let mut c = vec![s.matrix_c; n];
                let mut eta = vec![s.matrix_eta; n];
                for i in 0..n {
                    let mut rest = i;
                    let mut r2 = 0.0;
                    for a in 0..d {
                        let pos = rest % dims[a];
                        rest /= dims[a];
                        let delta = (pos as f64 + 0.5) * h[a] - center[a];
                        r2 += delta * delta;
                    }
                    if r2 <= s.radius * s.radius {
                        c[i] = s.particle_c;
                        eta[i] = s.particle_eta;
                    }
                }
                (c, eta)
            }
        };
        let u = if self.model.elastic_scale > 0.0 {
            vec![vec![0.0; n]; grid.ndim()]
        } else {
            Vec::new()
        };
        DiscreteState::from_fields(grid, c, eta, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tree_sum;

    #[test]
    fn shape_preset_carries_published_numbers() {
        let cfg = preset_single_particle(0.0, &[]);
        assert_eq!(cfg.grid.dims, vec![64, 64]);
        assert_eq!(cfg.grid.h, 0.25);
        assert_eq!(cfg.setup.radius, 7.5);
        assert_eq!(cfg.setup.particle_c, 0.238);
        assert_eq!(cfg.setup.particle_eta, 0.01);
        assert_eq!(cfg.setup.matrix_c, 0.1375);
        assert_eq!(cfg.setup.matrix_eta, 0.99);
        assert_eq!(cfg.model.elastic_scale, 0.0, "no elastic multiplier, no elasticity");
        assert_eq!(cfg.scheme.kappa_cb, 0.0);
        cfg.validate().unwrap();

        let with_l = preset_single_particle(3.0, &[]);
        assert_eq!(with_l.model.elastic_scale, 3.0);
        assert_eq!(with_l.scheme.kappa_cb, 0.05);
        with_l.validate().unwrap();
    }

    /// The rasterized radius-7.5 ball on the 64x64 desk grid: the cell
    /// count must match an exact integer-arithmetic enumeration (2828
    /// cells), and the initial mean composition must equal the
    /// volume-weighted mixture value.
    #[test]
    fn shape_preset_rasterization_matches_enumeration() {
        let cfg = preset_single_particle(0.0, &[]);
        let grid = cfg.grid().unwrap();
        let state = cfg.initial_state(&grid);

        // Independent oracle in half-cell integer units: the cell center
        // (i + 0.5) h is at distance^2 ((2i + 1 - 64)^2 + ...) (h/2)^2 from
        // the domain center, and (2 * 7.5 / h)^2 = 3600.
        let mut expect = 0usize;
        for j in 0..64i64 {
            for i in 0..64i64 {
                if (2 * i + 1 - 64).pow(2) + (2 * j + 1 - 64).pow(2) <= 3600 {
                    expect += 1;
                }
            }
        }
        assert_eq!(expect, 2828);
        let inside = state.c.iter().filter(|&&c| c == 0.238).count();
        assert_eq!(inside, expect);

        let n = grid.ncells() as f64;
        let mixture = (expect as f64 * 0.238 + (n - expect as f64) * 0.1375) / n;
        assert!((state.mean_c() - mixture).abs() <= 1e-14);
        // eta is the complementary mask.
        let ordered = state.eta.iter().filter(|&&e| e == 0.01).count();
        assert_eq!(ordered, expect);
        assert!(state.u.is_empty());

        // With elasticity the displacement components appear.
        let el = preset_single_particle(1.0, &[]);
        let state = el.initial_state(&grid);
        assert_eq!(state.u.len(), 2);
    }

    #[test]
    fn coarsening_preset_matches_supersaturation_formula() {
        let cfg = preset_coarsening(0.4);
        assert!((cfg.setup.matrix_c - 0.1818).abs() <= 1e-12);
        let cfg = preset_coarsening(0.175);
        assert!((cfg.setup.matrix_c - 0.162225).abs() <= 1e-12);
        assert_eq!(cfg.setup.particle_c, 0.234);
        assert_eq!(cfg.setup.radius, 1.5);
        assert!((supersaturated_c(0.0) - 0.147).abs() <= 1e-15);
        cfg.validate().unwrap();
    }

    /// Seed-fixed nucleation fields reproduce bitwise; the perturbation
    /// sample mean vanishes within 3 sigma; and every cell stays inside
    /// (0, 0.25) for the published supersaturations.
    #[test]
    fn nucleation_noise_is_reproducible_and_bounded() {
        let cfg = preset_nucleation(0.25, 42);
        assert_eq!(cfg.grid.dims, vec![128, 128, 8]);
        cfg.validate().unwrap();
        let grid = cfg.grid().unwrap();
        let a = cfg.initial_state(&grid);
        let b = cfg.initial_state(&grid);
        assert_eq!(a.c, b.c, "same seed, same field, bit for bit");
        assert_eq!(a.eta, b.eta);
        let other = preset_nucleation(0.25, 43).initial_state(&grid);
        assert_ne!(a.c, other.c, "a different seed must move the field");

        let n = grid.ncells() as f64;
        let mean_dc = tree_sum(&a.c) / n - cfg.setup.matrix_c;
        // Uniform on [-A, A]: sigma = A / sqrt(3).
        let three_sigma = 3.0 * cfg.setup.noise / 3f64.sqrt() / n.sqrt();
        assert!(mean_dc.abs() <= three_sigma, "|{mean_dc}| > {three_sigma}");
        for vf in [0.10, 0.175, 0.25, 0.325, 0.40] {
            let cbar = supersaturated_c(vf);
            assert!(cbar + 0.05 < 0.25, "perturbed composition must stay below 0.25");
        }
        assert!(a.c.iter().all(|&c| c > 0.0 && c < 0.25));
        assert!(a.eta.iter().all(|&e| e >= 0.05 - 1e-15 && e <= 0.15 + 1e-15));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = preset_single_particle(3.0, &[48, 32]);
        let text = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.grid.dims, vec![48, 32]);
        assert_eq!(back.model.elastic_scale, 3.0);
        assert_eq!(back.scheme.kappa_cb, 0.05);
        assert_eq!(back.setup.radius, cfg.setup.radius);
    }

    #[test]
    fn partial_files_fill_defaults_and_bad_keys_are_rejected() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
            scenario = "single-particle-coarsening"
            t_end = 25.0

            [setup]
            radius = 1.5
            particle_c = 0.234
            matrix_c = 0.162225

            [schwarz]
            nsub = 4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::SingleParticleCoarsening);
        assert_eq!(cfg.t_end, 25.0);
        assert_eq!(cfg.schwarz.nsub, 4);
        assert_eq!(cfg.grid.dims, vec![64, 64], "defaults fill omitted sections");
        assert_eq!(cfg.adaptive.dt_max, 2.0);

        let err = ScenarioConfig::from_toml_str("scenario = \"custom\"\nnot_a_key = 1\n");
        assert!(matches!(err, Err(ConfigError::Parse(_))), "typos must not pass silently");
    }

    /// Every shipped preset file parses, validates, and agrees with the
    /// corresponding constructor on the scenario-defining numbers, so the
    /// files cannot drift from the code.
    #[test]
    fn shipped_preset_files_match_constructors() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).expect("presets directory ships with the tree") {
            let path = entry.unwrap().path();
            if path.extension().and_then(|e| e.to_str()) != Some("toml") {
                continue;
            }
            seen += 1;
            let cfg = ScenarioConfig::load(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let name = path.file_stem().unwrap().to_str().unwrap().to_owned();
            match cfg.scenario {
                Scenario::SingleParticleShape | Scenario::SolverBench => {
                    let l = name.strip_prefix("shape_l").map_or(0.0, |s| s.parse().unwrap());
                    let want = preset_single_particle(l, &cfg.grid.dims);
                    assert_eq!(cfg.setup.radius, want.setup.radius, "{name}");
                    assert_eq!(cfg.setup.particle_c, want.setup.particle_c, "{name}");
                    assert_eq!(cfg.setup.particle_eta, want.setup.particle_eta, "{name}");
                    assert_eq!(cfg.setup.matrix_c, want.setup.matrix_c, "{name}");
                    assert_eq!(cfg.setup.matrix_eta, want.setup.matrix_eta, "{name}");
                    assert_eq!(cfg.model.elastic_scale, want.model.elastic_scale, "{name}");
                    assert_eq!(cfg.scheme.kappa_cb, want.scheme.kappa_cb, "{name}");
                }
                Scenario::SingleParticleCoarsening | Scenario::Nucleation => {
                    let want = preset_coarsening(cfg.setup.vf);
                    assert!(
                        (cfg.setup.matrix_c - want.setup.matrix_c).abs() <= 1e-12,
                        "{name}: matrix_c {} vs formula {}",
                        cfg.setup.matrix_c,
                        want.setup.matrix_c
                    );
                    if cfg.scenario == Scenario::SingleParticleCoarsening {
                        assert_eq!(cfg.setup.particle_c, 0.234, "{name}");
                        assert_eq!(cfg.setup.radius, 1.5, "{name}");
                    } else {
                        assert_eq!(cfg.setup.eta0, 0.1, "{name}");
                        assert_eq!(cfg.setup.noise, 0.05, "{name}");
                        assert_eq!(cfg.grid.dims, vec![128, 128, 8], "{name}");
                    }
                    assert_eq!(cfg.model.elastic_scale, 0.0, "{name}");
                }
                Scenario::Custom => {}
            }
            assert_eq!(cfg.grid.h, 0.25, "{name}");
            assert_eq!(cfg.adaptive.zeta, 100.0, "{name}");
            assert_eq!(cfg.adaptive.dt_min, 0.01, "{name}");
            assert_eq!(cfg.adaptive.dt_max, 2.0, "{name}");
        }
        assert_eq!(seen, 8, "expected the eight shipped preset files");
    }

    #[test]
    fn validation_rejects_inconsistent_setups() {
        // Particle too large for the box.
        let mut cfg = preset_single_particle(0.0, &[16, 16]);
        cfg.setup.radius = 7.5;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
        // ... and the preset itself avoids that by scaling the radius down.
        let scaled = preset_single_particle(0.0, &[16, 16]);
        assert!(scaled.setup.radius < 2.0);
        scaled.validate().unwrap();

        // Nucleation noise that can cross the admissibility wall.
        let mut cfg = preset_nucleation(0.4, 1);
        cfg.setup.noise = 0.20;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));

        // Inadmissible matrix state.
        let mut cfg = preset_coarsening(0.175);
        cfg.setup.matrix_c = -0.1;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));

        // Broken step bounds.
        let mut cfg = preset_coarsening(0.175);
        cfg.adaptive.dt_min = 5.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }
}
